"""Entry point for `python -m cascadeseg`."""

from cascadeseg.cli import cli

if __name__ == "__main__":
    cli()
