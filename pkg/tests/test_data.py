import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from data_processing.data_processor import CohortDataProcessor, read_raster, write_raster
from data_processing.folds import fold_sizes, make_folds, split_fold
from data_processing.sampler import AgeGroupSampler, age_groups, sample_pair_batch
from data_processing.subjects import MANIFEST_COLUMNS, Subject
from data_processing.synthetic import GeneratorConfig, disk_radius, draw_ages, generate_subject, render_channels
from numerics.errors import ConfigError


def test_generation_is_deterministic():
    config = GeneratorConfig()
    a = generate_subject(42.0, config, seed=3, sid="sub-00007")
    b = generate_subject(42.0, config, seed=3, sid="sub-00007")
    np.testing.assert_array_equal(a.image, b.image)
    assert a.image.dtype == np.float32
    assert a.image.shape == (2, 32, 32)
    other = generate_subject(42.0, config, seed=3, sid="sub-00008")
    assert not np.array_equal(a.image, other.image)


def test_structural_radius_reaches_max_at_max_age():
    config = GeneratorConfig()
    assert disk_radius(config.max_age, config) == pytest.approx(0.9 * 16)
    assert disk_radius(0.0, config) == 0.0
    structure = render_channels(config.max_age, config)[0]
    assert structure[16, 16] == 1.0
    assert structure[0, 0] == 0.0


def test_older_subjects_have_larger_disks():
    config = GeneratorConfig(noise_sigma=0.0)
    areas = [generate_subject(tau, config, seed=0).image[0].sum() for tau in (10, 40, 70, 100)]
    assert areas == sorted(areas)


@pytest.mark.parametrize("tau", [-0.1, 100.5])
def test_out_of_range_age_is_rejected(tau):
    with pytest.raises(ValueError, match="outside"):
        generate_subject(tau, GeneratorConfig(), seed=0)


def test_age_is_recoverable_from_intensity_channel():
    config = GeneratorConfig(noise_sigma=0.0, cohorts=["site-a"], cohort_offsets=[0.0])
    ramp = render_channels(config.max_age, config)[1]
    for tau in (0.0, 12.5, 63.0, 100.0):
        image = generate_subject(tau, config, seed=1).image
        recovered = image[1].mean() / ramp.mean() * config.max_age
        assert recovered == pytest.approx(tau, abs=1e-3)


@pytest.mark.parametrize("extents", [[16, 16], [32], [32, 32, 32, 32], [64, 16]])
def test_invalid_extents_are_rejected(extents):
    with pytest.raises(ConfigError):
        GeneratorConfig(extents=extents).validate()


def test_uniform_ages_stay_in_range():
    ages = draw_ages(GeneratorConfig(n_subjects=5000), np.random.default_rng(0))
    assert ages.min() >= 0.0
    assert ages.max() <= 100.0


def test_mixture_component_frequencies_match_weights():
    config = GeneratorConfig(n_subjects=10_000, age_distribution="mixture", mixture_means=[10, 50, 90],
                             mixture_stds=[1, 1, 1], mixture_weights=[0.5, 0.3, 0.2])
    ages = draw_ages(config, np.random.default_rng(21))
    component = np.argmin(np.abs(ages[:, None] - np.array([10, 50, 90])[None, :]), axis=1)
    observed = np.bincount(component, minlength=3)
    result = stats.chisquare(observed, np.array([0.5, 0.3, 0.2]) * len(ages))
    assert result.pvalue > 0.001


def test_folds_of_ten_subjects():
    folds = make_folds([f"s{i}" for i in range(10)], k=5, seed=0)
    assert fold_sizes(folds, k=5) == [2, 2, 2, 2, 2]


def test_folds_of_desk_sized_cohort():
    folds = make_folds(range(6049), k=5, seed=0)
    assert fold_sizes(folds, k=5) == [1210, 1210, 1210, 1210, 1209]


def test_folds_are_seeded():
    ids = [f"s{i}" for i in range(50)]
    pd.testing.assert_series_equal(make_folds(ids, seed=4), make_folds(ids, seed=4))
    assert not make_folds(ids, seed=4).equals(make_folds(ids, seed=5))


@pytest.mark.parametrize("n,k", [(3, 5), (10, 1)])
def test_fold_errors(n, k):
    with pytest.raises(ValueError):
        make_folds(range(n), k=k)


def test_duplicate_ids_cannot_be_folded():
    with pytest.raises(ValueError, match="unique"):
        make_folds(["a", "b", "a"], k=2)


@settings(max_examples=50)
@given(st.integers(min_value=2, max_value=300), st.integers(min_value=2, max_value=10), st.integers(0, 2**32 - 1))
def test_fold_sizes_differ_by_at_most_one(n, k, seed):
    if n < k:
        return
    sizes = fold_sizes(make_folds(range(n), k=k, seed=seed), k=k)
    assert sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1


def test_split_fold_partitions_manifest():
    manifest = pd.DataFrame({"id": list("abcdef"), "fold": [0, 1, 0, 1, 2, 2]})
    train, held_out = split_fold(manifest, 1)
    assert held_out["id"].tolist() == ["b", "d"]
    assert train["id"].tolist() == ["a", "c", "e", "f"]
    with pytest.raises(ValueError):
        split_fold(manifest, 3)


def test_age_groups_put_max_age_in_last_group():
    assert age_groups([0.0, 0.99, 1.0, 99.5, 100.0], 100.0).tolist() == [0, 0, 1, 99, 99]


def test_sampler_is_uniform_over_nonempty_groups():
    ages = np.concatenate([np.full(1000, 10.5), np.full(10, 80.5)])
    sampler = AgeGroupSampler(ages, 100.0)
    assert sampler.num_nonempty_groups == 2
    picks = sampler.draw(20_000, np.random.default_rng(8))
    observed = np.array([(picks < 1000).sum(), (picks >= 1000).sum()])
    assert stats.chisquare(observed).pvalue > 0.001


def test_sampler_batch_has_no_self_pairs():
    subjects = [Subject(id=f"s{i}", tau=float(a), image=np.zeros(1)) for i, a in enumerate([5, 5, 5, 40, 90])]
    batch = sample_pair_batch(subjects, batch_size=20, seed=2)
    assert len(batch) == 20
    assert all(x.id != y.id for x, y in batch)


def test_sampler_needs_two_subjects_without_self_pairs():
    with pytest.raises(ValueError):
        AgeGroupSampler([30.0], 100.0)
    x, y = AgeGroupSampler([30.0], 100.0, allow_self_pairs=True).sample_indices(3, np.random.default_rng(0))
    assert x.tolist() == y.tolist() == [0, 0, 0]


def test_processor_writes_identical_cohorts(tmp_path):
    config = GeneratorConfig(n_subjects=100)
    first = CohortDataProcessor(tmp_path / "a")
    second = CohortDataProcessor(tmp_path / "b")
    manifest = first.generate(config, seed=7)
    second.generate(config, seed=7)
    assert list(manifest.columns) == MANIFEST_COLUMNS
    assert first.manifest_path.read_bytes() == second.manifest_path.read_bytes()
    for relative in manifest["image_path"]:
        assert (first.data_dir / relative).read_bytes() == (second.data_dir / relative).read_bytes()


def test_processor_round_trips_manifest_and_images(tmp_path):
    processor = CohortDataProcessor(tmp_path)
    manifest = processor.generate(GeneratorConfig(n_subjects=12), seed=1, k=3)
    loaded = processor.read_manifest()
    assert loaded["id"].tolist() == manifest["id"].tolist()
    np.testing.assert_allclose(loaded["tau_years"], manifest["tau_years"], atol=1e-6)
    assert sorted(loaded["fold"].unique()) == [0, 1, 2]
    images = processor.load_images(loaded)
    assert images.shape == (12, 2, 32, 32)
    assert images.dtype == np.float32


def test_missing_manifest_is_reported(tmp_path):
    with pytest.raises(FileNotFoundError, match="generate"):
        CohortDataProcessor(tmp_path / "empty").read_manifest()


def test_raster_is_little_endian_float32(tmp_path):
    path = tmp_path / "image.npy"
    write_raster(path, np.arange(6, dtype=np.float64).reshape(2, 3))
    assert np.load(path).dtype == np.dtype("<f4")
    np.testing.assert_array_equal(read_raster(path), np.arange(6).reshape(2, 3))


def test_age_histogram_includes_max_age():
    manifest = pd.DataFrame({"id": list("abcd"), "tau_years": [0.0, 4.9, 5.0, 100.0], "cohort": ["site-a"] * 4})
    table = CohortDataProcessor("unused").age_histogram(manifest)
    assert table["site-a"].sum() == 4
    assert table.loc[0.0, "site-a"] == 2
    assert table.loc[100.0, "site-a"] == 1
