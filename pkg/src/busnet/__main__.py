import sys

from busnet.cli import main

sys.exit(main())
