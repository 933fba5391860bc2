"""vecsim: a batched robot-learning environment engine.

Self-contained stack: spatial math, a reduced-coordinate dynamics kernel,
actuator and sensor models, task-space controllers, procedural terrain,
manager-based and direct environment workflows, population-based training,
and a throughput benchmark CLI. Hot kernels are numba-compiled with a
pure-NumPy fallback selected by ``VECSIM_NUMBA=0``.
"""

from .accel import NUMBA_ENABLED
from .articulation import ArticulationState, ContactPointSet, KinematicTree, LinkSpec
from .maths import Transform, compose, inverse, relative_pose
from .registry import EmptyViewError, EntityRegistry, EntityView, LazyCache

__all__ = [
    "NUMBA_ENABLED",
    "ArticulationState",
    "ContactPointSet",
    "KinematicTree",
    "LinkSpec",
    "Transform",
    "compose",
    "inverse",
    "relative_pose",
    "EmptyViewError",
    "EntityRegistry",
    "EntityView",
    "LazyCache",
]

__version__ = "0.1.0"
