import sys

from mgir.cli import main

sys.exit(main())
