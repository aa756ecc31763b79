"""6DoF kit-assembly teleoperation toolkit."""

from .geometry import Pose, pose_compose, pose_inverse, position_error, quat_geodesic
from .mesh import TriMesh, load_obj, save_obj, voxelize_mesh
from .render import Camera, DepthImage, InstanceMask, render_depth
from .volume import VoxelVolume, crop_volume, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "TriMesh",
    "VoxelVolume",
    "Camera",
    "DepthImage",
    "InstanceMask",
    "pose_compose",
    "pose_inverse",
    "position_error",
    "quat_geodesic",
    "render_depth",
    "voxelize_mesh",
    "crop_volume",
    "save_volume",
    "load_volume",
    "save_obj",
    "load_obj",
    "__version__",
]
