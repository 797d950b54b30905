import sys

from simulmeas.cli import main

sys.exit(main())
