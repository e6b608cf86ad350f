#!/usr/bin/env python3
"""Zoom study: work-unit comparison of the four feedback schemes.
Thin wrapper over the CLI; pass --scale 1.0 for the full-size stream."""

import sys

from punctstream.cli import main

if __name__ == "__main__":
    sys.exit(main(["zoom"] + sys.argv[1:]))
