"""User-facing surface: configuration, datasets, sweeps and the CLI."""
