#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
latentprobit - multitask and transfer classification with a sparse latent
probit model.

Usage:
    python latentprobit.py <command> [options]
    python -m source.cli <command> [options]

Run with --help for the list of commands.
"""

from source.cli import main


if __name__ == '__main__':
    main()
