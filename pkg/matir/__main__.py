import sys

from matir.cli import main

sys.exit(main())
