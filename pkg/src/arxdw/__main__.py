import sys

from arxdw.cli import main

sys.exit(main())
