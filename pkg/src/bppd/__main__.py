"""Module entry point: python -m bppd."""

import sys

from .cli import main

sys.exit(main())
