import sys

from platoon_cascade.cli import main

sys.exit(main())
