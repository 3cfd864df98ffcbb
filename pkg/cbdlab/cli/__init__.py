"""
CLI module for cbdlab.

Provides the command-line experiment runner that writes report.json and
summary.csv for every subcommand.
"""
