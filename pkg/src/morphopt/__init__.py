"""Co-optimization of morphology and mounted pose for modular serial manipulators.

The pipeline: a continuous module-state vector decodes into an assembly
sequence (descending-order mapping with an end-of-manipulator marker),
the chain is assembled at a planar mounted pose, a receding-horizon
controller tracks the Cartesian task, and a hierarchical cost scores
tracking feasibility before effort/manipulability performance. CMA-ES
searches the joint (module-state, pose) space; a permutation GA provides
the discretized baseline.
"""

from .collision import (
    Capsule,
    Environment,
    Obstacle,
    capsule_obstacle_distance,
    clearance,
    default_environment,
    load_environment,
    module_capsules,
    save_environment,
)
from .controller import ControllerConfig, Rollout, ik_solve, mpc_step, rollout, warm_starts
from .dynamics import (
    TorqueTrajectory,
    differentiate_joint_trajectory,
    effort_metric,
    inverse_dynamics,
    torque_feasible,
)
from .evaluation import (
    EvaluationReport,
    Evaluator,
    ObjectiveWeights,
    constraint_penalties,
    evaluate,
    evaluate_design,
    total_cost,
    tracking_error,
)
from .kinematics import (
    EePose,
    KinematicChain,
    assemble,
    forward_kinematics,
    jacobian,
    manipulability,
)
from .library import ModuleKind, ModuleLibrary, ModuleSpec, default_library, load_library, save_library
from .morphology import (
    DesignGenome,
    MorphologyState,
    MountedPose,
    Workcell,
    decode,
    effective_equal,
    random_genome,
)
from .optimizer import (
    CmaesConfig,
    GaConfig,
    cmaes_optimize,
    discretize_pose,
    ga_optimize,
    genome_bounds,
    pose_grid,
)
from .task import (
    ReferenceTrajectory,
    Waypoint,
    default_drilling_task,
    drilling_task,
    load_task,
    resample,
)

__version__ = "0.1.0"
