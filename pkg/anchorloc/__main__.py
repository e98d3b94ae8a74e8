from __future__ import annotations

import sys

from anchorloc.cli import main

sys.exit(main())
