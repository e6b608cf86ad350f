#!/usr/bin/env python3
"""Imputation lag study: late fractions with and without feedback, plus an
optional divergence series CSV.  Thin wrapper over the CLI."""

import sys

from punctstream.cli import main

if __name__ == "__main__":
    sys.exit(main(["impute-lag"] + sys.argv[1:]))
