import sys

from gazesplat.cli import main

sys.exit(main())
