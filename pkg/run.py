import sys

from obx.cli import main

if __name__ == "__main__":
    # Usage: python run.py {analyze,march,order-study} --builtin index3 ...
    sys.exit(main())
