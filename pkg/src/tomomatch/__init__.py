"""Registration of gravity-aligned 3D maps from tomographic slice features."""

from .consensus import ConsensusParams, MatchConfig, MatchResult, correlate_heights, match_maps
from .errors import *  # noqa: F401,F403
from .geometry import PointCloud, Transform4DoF, apply_transform, compose, invert, load_cloud, save_cloud, voxel_filter
from .rigid2d import Hypothesis2D, RansacParams
from .tomography import SliceSet, slice_map

__version__ = "0.1.0"
