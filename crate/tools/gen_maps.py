#!/usr/bin/env python3
"""Regenerates the bundled maps under assets/maps/."""
import math
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "assets", "maps")


def fmt(x):
    return repr(float(x))


def lane(id, width, speed_limit, points, successors=(), left=None, right=None):
    lines = ["[[lanes]]", f'id = "{id}"', f"width = {fmt(width)}", f"speed_limit = {fmt(speed_limit)}"]
    pts = ", ".join(f"[{fmt(x)}, {fmt(y)}]" for x, y in points)
    lines.append(f"centerline = [{pts}]")
    lines.append("successors = [%s]" % ", ".join(f'"{s}"' for s in successors))
    if left:
        lines.append(f'left = "{left}"')
    if right:
        lines.append(f'right = "{right}"')
    return "\n".join(lines)


def write(name, chunks):
    path = os.path.join(OUT, name)
    with open(path, "w") as f:
        f.write("\n\n".join(chunks) + "\n")
    print("wrote", path)


def highway():
    # heading +x, left is +y: l0 rightmost, l2 leftmost
    chunks = ['id = "highway"']
    spec = [("l0", 0.0, "l1", None), ("l1", 3.5, "l2", "l0"), ("l2", 7.0, None, "l1")]
    for lid, y, left, right in spec:
        chunks.append(lane(lid, 3.5, 30.0, [(0.0, y), (1200.0, y)], left=left, right=right))
    write("highway.toml", chunks)


def curve():
    chunks = ['id = "curve"']
    for lid, radius, left, right in (("c0", 300.0, "c1", None), ("c1", 296.5, None, "c0")):
        pts = []
        for i in range(0, 121):
            th = math.radians(-60.0 + i)
            pts.append((radius * math.cos(th), radius * math.sin(th)))
        chunks.append(lane(lid, 3.5, 20.0, pts, left=left, right=right))
    write("curve.toml", chunks)


def crossroad():
    chunks = ['id = "crossroad"']
    L = 300.0
    # northbound (ns_*): heading +y, left is -x
    chunks.append(lane("ns_r", 3.5, 13.0, [(5.25, -L), (5.25, L)], left="ns_l"))
    chunks.append(lane("ns_l", 3.5, 13.0, [(1.75, -L), (1.75, L)], right="ns_r"))
    # southbound (sn_*): heading -y, left is +x
    chunks.append(lane("sn_r", 3.5, 13.0, [(-5.25, L), (-5.25, -L)], left="sn_l"))
    chunks.append(lane("sn_l", 3.5, 13.0, [(-1.75, L), (-1.75, -L)], right="sn_r"))
    # eastbound (we_*): heading +x, left is +y
    chunks.append(lane("we_r", 3.5, 13.0, [(-L, -5.25), (L, -5.25)], left="we_l"))
    chunks.append(lane("we_l", 3.5, 13.0, [(-L, -1.75), (L, -1.75)], right="we_r"))
    # westbound (ew_*): heading -x, left is -y
    chunks.append(lane("ew_r", 3.5, 13.0, [(L, 5.25), (-L, 5.25)], left="ew_l"))
    chunks.append(lane("ew_l", 3.5, 13.0, [(L, 1.75), (-L, 1.75)], right="ew_r"))

    ns = ["ns_r", "ns_l", "sn_r", "sn_l"]
    ew = ["we_r", "we_l", "ew_r", "ew_l"]
    conflicts = ", ".join(f'["{a}", "{b}"]' for a in ns for b in ew)
    inter = ["[[intersections]]", 'id = "x0"', f"conflicts = [{conflicts}]"]
    inter.append("[intersections.signal]")
    inter.append("cycle = 40.0")
    phases = []
    for a in ns:
        phases.append('{ approach = "%s", green = [0.0, 18.0] }' % a)
    for a in ew:
        phases.append('{ approach = "%s", green = [20.0, 38.0] }' % a)
    inter.append("phases = [%s]" % ", ".join(phases))
    chunks.append("\n".join(inter))
    write("crossroad.toml", chunks)


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    highway()
    curve()
    crossroad()
