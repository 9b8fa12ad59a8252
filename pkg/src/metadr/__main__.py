import sys

from metadr.cli import main

sys.exit(main())
