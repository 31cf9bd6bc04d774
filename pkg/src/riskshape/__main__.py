import sys

from riskshape.cli import main

sys.exit(main())
