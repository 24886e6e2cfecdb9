import sys

from hirc.cli import main

sys.exit(main())
