"""
Main entry module for PairAge.
This module imports and runs the command-line launcher.
"""

import sys

import launcher


def main():
    """
    Main entry point for the command line.
    """
    sys.exit(launcher.main())


if __name__ == "__main__":
    main()
