import sys

from wildtorus.cli import main

sys.exit(main())
