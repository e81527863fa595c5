"""Subcommand implementations behind the CLI."""
