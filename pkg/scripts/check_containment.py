#!/usr/bin/env python3
"""Randomized containment checking: every seeded workload must keep its
feedback-enabled output between the reference output and the reference
minus the feedback subset.  Thin wrapper over the CLI."""

import sys

from punctstream.cli import main

if __name__ == "__main__":
    sys.exit(main(["check"] + sys.argv[1:]))
