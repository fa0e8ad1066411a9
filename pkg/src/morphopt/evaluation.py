"""Scoring of designs on a task: the hierarchical feasibility-then-performance cost.

A design evaluates to E = E_track + E_collision + E_dynamic (= E_sum) and,
only once E_sum drops below the threshold xi, earns the soft bonus
-w * exp(-w_f * F_eff + w_m * M_man). Constraint violations cost 1e10
each, so any feasible design scores strictly below any infeasible one.

Evaluation is pure given (genome, seed) and safe to run data-parallel;
constraint checks are skipped for rollouts whose tracking error already
certifies E_sum >= xi, which cannot change any feasibility verdict.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .collision import Environment, trajectory_collision
from .controller import ControllerConfig, Rollout, rollout, warm_starts
from .dynamics import (
    TorqueTrajectory,
    differentiate_joint_trajectory,
    effort_metric,
    torque_feasible,
    trajectory_torques,
)
from .kinematics import assemble, fk_batch
from .library import ModuleLibrary
from .morphology import DesignGenome, MorphologyState, MountedPose, decode
from .task import DRILL_IN, ReferenceTrajectory

__all__ = [
    "PENALTY",
    "ObjectiveWeights",
    "EvaluationReport",
    "tracking_error",
    "constraint_penalties",
    "total_cost",
    "evaluate",
    "evaluate_design",
    "Evaluator",
]

PENALTY = 1e10
MIN_TASK_DOF = 3  # fewer joints cannot span the 5-dim drilling task
WARM_START_COUNT = 5
ABORT_ERR_SQ = 1.0  # instantaneous squared pose error treated as divergence


@dataclass(frozen=True)
class ObjectiveWeights:
    """Hierarchical cost weights: w and xi plus the soft-term gains."""

    w: float = 10.0
    w_f: float = 0.01
    w_m: float = 1.0
    xi: float = 0.001

    def __post_init__(self):
        if self.w <= 0.0 or self.xi <= 0.0:
            raise ValueError("w and xi must be positive")
        if self.w_f < 0.0 or self.w_m < 0.0:
            raise ValueError("soft-term gains must be non-negative")


@dataclass
class EvaluationReport:
    E_track: float = PENALTY
    E_collision: float = 0.0
    E_dynamic: float = 0.0
    E_sum: float = PENALTY
    F_eff: float = 0.0
    M_man: float = 0.0
    E: float = PENALTY
    feasible: bool = False
    chosen_warm_start: int = -1
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_jsonable)


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"not JSON-serializable: {type(value)}")


def tracking_error(roll: Rollout, trajectory: ReferenceTrajectory) -> float:
    """Mean squared pose error over the N control loops.

    Aborted rollouts fill the unexecuted remainder with the (capped)
    divergence error; the abort rule guarantees the result stays above
    the feasibility threshold in that case.
    """
    if roll.loops != trajectory.N:
        raise ValueError(f"rollout has {roll.loops} loops, trajectory {trajectory.N}")
    err = roll.err_sq
    if roll.aborted_at is None:
        return float(err.mean())
    k = roll.aborted_at
    total = float(err[: k + 1].sum()) + (roll.loops - k - 1) * roll.abort_fill
    return total / roll.loops


def constraint_penalties(
    roll: Rollout,
    chain,
    env: Environment,
    torques: TorqueTrajectory,
    trajectory: ReferenceTrajectory,
    fk=None,
) -> dict:
    """Eq-style penalty terms: 1e10 per violated constraint class, else 0."""
    colliding, min_d, first_coll = trajectory_collision(
        chain, roll.q_series, env, trajectory.segments, fk=fk
    )
    torque_ok, first_torque = torque_feasible(torques)
    return {
        "E_collision": PENALTY if colliding else 0.0,
        "E_dynamic": 0.0 if torque_ok else PENALTY,
        "min_clearance": float(min_d.min()),
        "first_collision_loop": first_coll,
        "first_torque_loop": first_torque,
    }


def total_cost(e_track, e_collision, e_dynamic, f_eff, m_man, weights: ObjectiveWeights) -> float:
    """Unconstrained hierarchical objective.

    Below the threshold the soft term rewards low effort and high
    manipulability; above it only the feasibility level counts.
    """
    e_sum = e_track + e_collision + e_dynamic
    if e_sum < weights.xi:
        return float(e_sum - weights.w * np.exp(-weights.w_f * f_eff + weights.w_m * m_man))
    return float(e_sum)


def _tool_z_world(quaternions):
    w, x, y, z = quaternions.T
    return np.stack(
        [2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)], axis=1
    )


def _sentinel_report(reason: str, diagnostics=None) -> EvaluationReport:
    diag = {"reason": reason}
    diag.update(diagnostics or {})
    return EvaluationReport(
        E_track=PENALTY,
        E_sum=PENALTY,
        E=PENALTY,
        feasible=False,
        chosen_warm_start=-1,
        diagnostics=diag,
    )


def evaluate_design(
    library: ModuleLibrary,
    morphology: MorphologyState,
    pose: MountedPose,
    trajectory: ReferenceTrajectory,
    env: Environment,
    weights: ObjectiveWeights,
    config: ControllerConfig = ControllerConfig(),
    seed: int = 0,
    contact_force: float = 0.0,
) -> EvaluationReport:
    """Score one decoded design: assemble, warm-start, roll out, cost.

    Up to five IK warm starts are each rolled out in full; the report of
    the best-scoring one is returned with its index. All failure modes
    fold into penalty-sized costs, keeping the map total over designs.
    """
    chain = assemble(library, morphology, pose)
    base_diag = {"sequence": list(morphology.sequence), "pose": [pose.x, pose.y, pose.theta],
                 "dof": chain.dof}
    if chain.dof < MIN_TASK_DOF:
        return _sentinel_report("dof below task minimum", base_diag)
    starts = warm_starts(chain, trajectory, k=WARM_START_COUNT, rng_seed=seed)
    if not starts:
        return _sentinel_report("no IK solution for the first reference pose", base_diag)
    resolved = env.resolve(pose)
    abort_min_sum = weights.xi * trajectory.N
    best = None
    for idx, q0 in enumerate(starts):
        roll = rollout(
            chain, q0, trajectory, config,
            abort_err_sq=ABORT_ERR_SQ, abort_min_sum=abort_min_sum,
        )
        e_track = tracking_error(roll, trajectory)
        diag = dict(base_diag)
        diag["aborted_at"] = roll.aborted_at
        e_coll = e_dyn = 0.0
        f_eff = m_man = 0.0
        if e_track < weights.xi:
            fk = fk_batch(chain, roll.q_series)
            qd, qdd = differentiate_joint_trajectory(roll.q_series, config.dt)
            wrenches = None
            if contact_force != 0.0:
                wrenches = np.zeros((trajectory.N, 6))
                drill_in = np.array([s == DRILL_IN for s in trajectory.segments])
                wrenches[drill_in, :3] = contact_force * _tool_z_world(
                    roll.ee_quaternions[drill_in]
                )
            torques = TorqueTrajectory(
                torques=trajectory_torques(chain, roll.q_series, qd, qdd, wrenches),
                limits=chain.torque_limits,
            )
            pens = constraint_penalties(roll, chain, resolved, torques, trajectory, fk=fk)
            e_coll = pens["E_collision"]
            e_dyn = pens["E_dynamic"]
            diag["min_clearance"] = pens["min_clearance"]
            diag["first_collision_loop"] = pens["first_collision_loop"]
            diag["first_torque_loop"] = pens["first_torque_loop"]
            f_eff = effort_metric(torques)
            if chain.dof >= 6:
                jj = roll.jacobians @ roll.jacobians.transpose(0, 2, 1)
                m_man = float(np.linalg.det(jj).mean())
        else:
            diag["constraints_skipped"] = True
        e_total = total_cost(e_track, e_coll, e_dyn, f_eff, m_man, weights)
        candidate = EvaluationReport(
            E_track=e_track,
            E_collision=e_coll,
            E_dynamic=e_dyn,
            E_sum=e_track + e_coll + e_dyn,
            F_eff=f_eff,
            M_man=m_man,
            E=e_total,
            feasible=bool(e_track + e_coll + e_dyn < weights.xi),
            chosen_warm_start=idx,
            diagnostics=diag,
        )
        if best is None or candidate.E < best.E:
            best = candidate
    return best


def evaluate(
    library: ModuleLibrary,
    genome: DesignGenome,
    trajectory: ReferenceTrajectory,
    env: Environment,
    weights: ObjectiveWeights,
    config: ControllerConfig = ControllerConfig(),
    seed: int = 0,
    contact_force: float = 0.0,
) -> EvaluationReport:
    """Decode a genome (seeded tie-break) and score the resulting design."""
    states = np.asarray(genome.module_states, dtype=float)
    if states.size != library.m + 1:
        raise ValueError(
            f"genome has {states.size} module states, library needs {library.m + 1}"
        )
    morphology = decode(states, rng_seed=seed, end_effector_id=library.end_effector_id)
    if len(morphology.sequence) == 1:
        report = _sentinel_report(
            "zero-module morphology", {"sequence": list(morphology.sequence)}
        )
        return report
    return evaluate_design(
        library, morphology, genome.pose, trajectory, env, weights, config, seed,
        contact_force=contact_force,
    )


class Evaluator:
    """Bundles the task context so optimizers see vector -> report maps.

    Instances are picklable and stateless across calls, which is what the
    process-parallel population evaluation relies on.
    """

    def __init__(
        self,
        library: ModuleLibrary,
        trajectory: ReferenceTrajectory,
        env: Environment,
        weights: ObjectiveWeights,
        config: ControllerConfig = ControllerConfig(),
        seed: int = 0,
        contact_force: float = 0.0,
    ):
        self.library = library
        self.trajectory = trajectory
        self.env = env
        self.weights = weights
        self.config = config
        self.seed = seed
        self.contact_force = contact_force

    def evaluate_vector(self, vector) -> EvaluationReport:
        genome = DesignGenome.from_vector(np.asarray(vector, dtype=float))
        return evaluate(
            self.library, genome, self.trajectory, self.env, self.weights,
            self.config, self.seed, contact_force=self.contact_force,
        )

    def evaluate_permutation(self, permutation, pose: MountedPose) -> EvaluationReport:
        from .morphology import truncate_at_end_effector

        seq = truncate_at_end_effector(permutation, self.library.end_effector_id)
        if len(seq) == 1:
            return _sentinel_report("zero-module morphology", {"sequence": list(seq)})
        morphology = MorphologyState(sequence=seq)
        return evaluate_design(
            self.library, morphology, pose, self.trajectory, self.env, self.weights,
            self.config, self.seed, contact_force=self.contact_force,
        )
