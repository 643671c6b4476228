import sys

from wmdsim.cli import main

sys.exit(main())
