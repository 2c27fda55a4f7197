import sys

from splatreg.cli import main

sys.exit(main())
