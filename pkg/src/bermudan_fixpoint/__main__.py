"""Allow ``python -m bermudan_fixpoint``."""

import sys

from .cli import main

sys.exit(main())
