"""A runpy entry point for conditioned-walk.

This makes it possible to invoke CLI
via :command:`python -m conditioned_walk`.
"""

from __future__ import annotations

from conditioned_walk.cli import main


if __name__ == "__main__":
    main()
