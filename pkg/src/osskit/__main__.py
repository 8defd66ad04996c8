from osskit.cli import main
import sys
sys.exit(main())
