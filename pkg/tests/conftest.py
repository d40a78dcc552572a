import sys
import os
import warnings

sys.path.insert(0, os.path.dirname(__file__))

warnings.filterwarnings("ignore", message=".*roundoff error.*")
