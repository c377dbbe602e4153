import sys

from vecnoma.cli import main

sys.exit(main())
