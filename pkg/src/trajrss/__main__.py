import sys

from trajrss.cli import main

sys.exit(main())
