import sys

from auber.cli import main

sys.exit(main())
