"""Allow `python -m active_subset`."""

import sys

from active_subset.cli import main

if __name__ == "__main__":
    sys.exit(main())
