import sys

from depthnav.cli import main

sys.exit(main())
