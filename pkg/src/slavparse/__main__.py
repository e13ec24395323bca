"""Entry point for ``python -m slavparse``."""

from .cli import main

main()
