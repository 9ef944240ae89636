import sys

from fleetmeter.cli import main

sys.exit(main())
