import sys

from heleshaw.main import main

sys.exit(main())
