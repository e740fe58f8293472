"""Full-body motion and terrain reconstruction from six body-worn IMUs."""
from tipose._backend import USE_NUMBA, backend_name
from tipose.errors import TiposeError
from tipose.kinematics import MotionSequence, Pose, Skeleton, default_skeleton
from tipose.imu import ImuFrame, ImuStream, imu_features, synthesize_imu

__version__ = "0.1.0"

__all__ = ["USE_NUMBA", "backend_name", "TiposeError", "MotionSequence", "Pose", "Skeleton",
           "default_skeleton", "ImuFrame", "ImuStream", "imu_features", "synthesize_imu", "__version__"]
