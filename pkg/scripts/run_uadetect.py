#! /usr/bin/env python
"""
A helper script that runs the uadetect command line from a source
checkout, without installing the package. e.g.

   > python run_uadetect.py reproduce 1 --out results/case1
   > python run_uadetect.py train data/nominal.csv --config demo.pars.txt

See `python run_uadetect.py --help` for the available commands.
"""

import os.path
import sys
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)),
                                '..'))

from uadetect.cli import main

sys.exit(main())
