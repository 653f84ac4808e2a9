import math
import os

BASE_DIR   = os.path.dirname(os.path.abspath(__file__))
DATA_DIR   = os.path.join(BASE_DIR, "data")
OUTPUT_DIR = os.path.join(BASE_DIR, "output")

TRIPS_PATH    = os.path.join(DATA_DIR, "trips.csv")
EVENTS_PATH   = os.path.join(OUTPUT_DIR, "events.csv")
STATIONS_PATH = os.path.join(OUTPUT_DIR, "stations.csv")
REJECTS_PATH  = os.path.join(OUTPUT_DIR, "rejects.csv")
PANEL_PATH    = os.path.join(OUTPUT_DIR, "panel.json")
FITS_PATH     = os.path.join(OUTPUT_DIR, "fits.csv")
CV_PATH       = os.path.join(OUTPUT_DIR, "bandwidth.json")
GOF_PATH      = os.path.join(OUTPUT_DIR, "gof.json")
STUDY_PATH    = os.path.join(OUTPUT_DIR, "study.json")
CONFIG_PATH   = os.path.join(BASE_DIR, "netcox.json")

# Kernel names accepted in configs; modifiers compose as "<base>+one_sided" etc.
KERNEL_NAMES     = ("triangular", "epanechnikov", "uniform")
KERNEL_MODIFIERS = ("one_sided", "local_linear_equivalent")

DEFAULT_THETA_BOX = (-20.0, 20.0)
# exp(700) is the last power of e below float64 overflow
MAX_LINEAR_PREDICTOR = 700.0

# Frequency regimes (l1, l2) of the goodness-of-fit subnetworks
DEFAULT_REGIMES   = ((1, 3), (2, 4), (3, 5), (4, 6), (5, 12), (10, math.inf))
DEFAULT_QUANTILES = (0.10, 0.90)
DEFAULT_N_SIMS    = 3840

# Weekly panel defaults: Friday is day 1, Monday..Thursday are days 4..7
WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
DEFAULT_ANCHOR_WEEKDAY = "friday"
FEATURE_COLUMNS = (
    "intercept", "activity", "common_neighbors", "max_degree", "friday_avg", "friday_inactive",
)

TRIP_COLUMNS = {
    "start_time":    "start_time",
    "end_time":      "end_time",
    "start_station": "start_station",
    "end_station":   "end_station",
}


def max_workers() -> int:
    """Thread-pool size, capped by the NETCOX_THREADS environment variable."""
    env = os.environ.get("NETCOX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1
