"""Loop-closure check on a small frame tree.

Builds scanner, maxilla and mandible frames, closes the loop with a redundant
edge, then shows how a perturbed edge shows up in the loop error.

    python3 demos/transform_tree_loop.py
"""
from jawkit import se3
from jawkit.se3 import RigidTransform, compose
from jawkit.tree import CHECK, TransformTree, loop_error_report


def main() -> None:
    tree = TransformTree(frames=["scanner", "maxilla", "mandible"])
    tree.add_edge("scanner", "maxilla", RigidTransform(se3.rot_z(12.0), [4.0, -2.0, 30.0]))
    tree.add_edge("maxilla", "mandible", RigidTransform(se3.rot_x(-3.0), [0.0, 1.5, -18.0]))
    exact = tree.resolve("mandible", "scanner")

    for label, bump in (("consistent", RigidTransform.identity()),
                        ("perturbed", RigidTransform(se3.rot_y(0.5), [0.2, 0.0, 0.1]))):
        t = TransformTree.from_json(tree.to_json())
        t.add_edge("mandible", "scanner", compose(bump, exact), role=CHECK, label=label)
        rep = loop_error_report(t, ["scanner", "maxilla", "mandible"])
        print(f"{label:<11} theta {rep['theta_deg']:.3e} deg   |t| {rep['t_norm_mm']:.3e} mm")


if __name__ == "__main__":
    main()
