"""Joint-space change at the TMJ when the mandible moves off plan.

Moves the condyle toward the fossa in steps and reports the mean
measured-minus-planned distance over the fossa region facing the motion.

    python3 demos/joint_space_response.py
"""
import numpy as np

from jawkit import synth, tmj
from jawkit.se3 import RigidTransform


def main() -> None:
    ph = synth.make_phantom()
    joint = tmj.JointModel("left", ph.fossae["left"], ph.condyles["left"])
    up = np.array([0.0, 0.0, 1.0])
    mask = tmj.facing_mask(joint.fossa, up, 10.0)
    print(f"facing region: {int(mask.sum())} of {joint.fossa.n_vertices} fossa vertices")
    print(f"{'shift mm':>9}{'facing mean':>13}{'pooled mu':>11}{'pooled sigma':>14}")
    for shift in (-0.5, -0.25, 0.0, 0.25, 0.5, 1.0):
        rep = tmj.simulate_joint(joint, RigidTransform.identity(),
                                 RigidTransform.from_translation(shift * up))
        m = mask & rep.diff_map.valid
        print(f"{shift:9.2f}{rep.diff_map.values[m].mean():13.4f}"
              f"{rep.diff_mu_mm:11.4f}{rep.diff_sigma_mm:14.4f}")


if __name__ == "__main__":
    main()
