import sys

from anchorcache.cli import main

sys.exit(main())
