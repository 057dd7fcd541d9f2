import sys

from gssfcap.cli import main

sys.exit(main())
