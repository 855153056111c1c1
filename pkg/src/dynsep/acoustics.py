"""Grid scenes, synthetic binaural room impulse responses, and mixing.

The acoustic model keeps the cues the agent can exploit -- distance
attenuation, occlusion, first-order reflections, reverberation, and
binaural direction (ILD/ITD) -- with none of the cost of a measured-RIR
simulator. Scenes are rooms-and-corridors layouts on a 1 m grid with a
4-neighbor navigability graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import ConfigurationError
from .dsp import SAMPLE_RATE, InvalidInputError

SPEED_OF_SOUND = 343.0
HEADINGS = (0, 90, 180, 270)
# heading -> (drow, dcol); 0 faces north (decreasing row)
HEADING_VEC = {0: (-1, 0), 90: (0, 1), 180: (1, 0), 270: (0, -1)}

ILD_STRENGTH = 0.3          # lambda
MAX_ITD_S = 0.0006          # epsilon, 0.6 ms
OCCLUSION_FACTOR = 0.3      # beta, per occluding wall cell
REFLECTION_SCALE = 0.15
TAIL_SCALE = 0.04
TAIL_MS = 120.0


@dataclass(frozen=True)
class AgentPose:
    node: tuple[int, int]   # (row, col)
    heading: int            # degrees in HEADINGS

    def __post_init__(self):
        if self.heading not in HEADINGS:
            raise InvalidInputError(f"heading must be one of {HEADINGS}")


@dataclass
class GridScene:
    occupancy: np.ndarray   # bool (h, w), True = wall
    absorption: np.ndarray  # float (h, w) in [0, 1]
    seed: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def is_free(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        h, w = self.shape
        return 0 <= r < h and 0 <= c < w and not self.occupancy[r, c]

    def free_cells(self) -> list[tuple[int, int]]:
        return [tuple(rc) for rc in np.argwhere(~self.occupancy)]

    def neighbors(self, cell: tuple[int, int]):
        for dr, dc in HEADING_VEC.values():
            nxt = (cell[0] + dr, cell[1] + dc)
            if self.is_free(nxt):
                yield nxt


def generate_scene(seed: int, size: tuple[int, int] = (20, 20), room_count: int = 4) -> GridScene:
    """Deterministic rooms-and-corridors scene with connected free space."""
    h, w = size
    if h < 12 or w < 12:
        raise ConfigurationError("scene must be at least 12x12")
    rng = np.random.default_rng(seed)
    occ = np.ones((h, w), dtype=bool)
    centers = []
    for _ in range(room_count):
        rh = int(rng.integers(3, max(4, h // 3)))
        rw = int(rng.integers(3, max(4, w // 3)))
        r0 = int(rng.integers(1, h - rh - 1))
        c0 = int(rng.integers(1, w - rw - 1))
        occ[r0 : r0 + rh, c0 : c0 + rw] = False
        centers.append((r0 + rh // 2, c0 + rw // 2))
    # L-shaped corridors chaining room centers keep everything connected
    for (r1, c1), (r2, c2) in zip(centers, centers[1:]):
        occ[min(r1, r2) : max(r1, r2) + 1, c1] = False
        occ[r2, min(c1, c2) : max(c1, c2) + 1] = False
    absorption = np.where(occ, rng.uniform(0.2, 0.8, size=(h, w)), 0.0)
    scene = GridScene(occupancy=occ, absorption=absorption, seed=seed)
    if len(_largest_component(scene)) < 20:
        # enlarge the first room until the navigable component is big enough
        occ[1 : h - 1, 1 : w // 2] = False
        scene = GridScene(occupancy=occ, absorption=absorption, seed=seed)
    return scene


def _largest_component(scene: GridScene) -> set[tuple[int, int]]:
    best: set[tuple[int, int]] = set()
    seen: set[tuple[int, int]] = set()
    for start in scene.free_cells():
        if start in seen:
            continue
        comp = {start}
        frontier = [start]
        while frontier:
            cur = frontier.pop()
            for nxt in scene.neighbors(cur):
                if nxt not in comp:
                    comp.add(nxt)
                    frontier.append(nxt)
        seen |= comp
        if len(comp) > len(best):
            best = comp
    return best


def geodesic_distance(scene: GridScene, a: tuple[int, int], b: tuple[int, int]) -> float:
    """Shortest-path length in meters on the navigability graph; inf if disconnected."""
    if not (scene.is_free(a) and scene.is_free(b)):
        raise InvalidInputError("endpoints must be free cells")
    if a == b:
        return 0.0
    dist = {a: 0}
    frontier = [a]
    while frontier:
        nxt_frontier = []
        for cur in frontier:
            for nxt in scene.neighbors(cur):
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    if nxt == b:
                        return float(dist[nxt])
                    nxt_frontier.append(nxt)
        frontier = nxt_frontier
    return float("inf")


def euclidean_distance(a: tuple[int, int], b: tuple[int, int]) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


@dataclass
class BinauralRir:
    """Sparse FIR taps per ear: (delay in samples, gain) pairs."""
    left: list[tuple[int, float]]
    right: list[tuple[int, float]]

    def energy(self) -> float:
        return sum(g * g for _, g in self.left) + sum(g * g for _, g in self.right)

    def max_delay(self) -> int:
        return max([d for d, _ in self.left + self.right] or [0])


def _occluding_walls(scene: GridScene, a: tuple[int, int], b: tuple[int, int]) -> int:
    """Number of wall cells strictly between a and b on the straight segment."""
    n = int(np.ceil(euclidean_distance(a, b) * 4)) + 1
    cells = set()
    for s in np.linspace(0.0, 1.0, n)[1:-1]:
        r = int(round(a[0] + s * (b[0] - a[0])))
        c = int(round(a[1] + s * (b[1] - a[1])))
        if (r, c) not in (a, b):
            cells.add((r, c))
    h, w = scene.shape
    return sum(1 for (r, c) in cells if 0 <= r < h and 0 <= c < w and scene.occupancy[r, c])


def _azimuth_sin(source: tuple[float, float], pose: AgentPose) -> float:
    """sin(theta) with theta the source bearing relative to heading, +90 = hard left."""
    dr = source[0] - pose.node[0]
    dc = source[1] - pose.node[1]
    if dr == 0 and dc == 0:
        return 0.0
    fr, fc = HEADING_VEC[pose.heading]
    # left unit vector in (row, col) coords with rows increasing downward
    lr, lc = -fc, fr
    norm = float(np.hypot(dr, dc))
    return (dr * lr + dc * lc) / norm


def _ear_taps(gain: float, delay_s: float, sin_az: float):
    base = int(round(delay_s * SAMPLE_RATE))
    itd = int(round(MAX_ITD_S * sin_az * SAMPLE_RATE))
    g_l = gain * (1.0 + ILD_STRENGTH * sin_az)
    g_r = gain * (1.0 - ILD_STRENGTH * sin_az)
    # positive azimuth (left): right ear is farther, delayed by the ITD
    left = (base + max(0, -itd), g_l)
    right = (base + max(0, itd), g_r)
    return left, right


def _wall_images(scene: GridScene, src: tuple[int, int]):
    """First-order image sources: mirror across the nearest wall on each axis direction."""
    h, w = scene.shape
    images = []
    for dr, dc in HEADING_VEC.values():
        r, c = src
        while True:
            r, c = r + dr, c + dc
            if not (0 <= r < h and 0 <= c < w):
                break
            if scene.occupancy[r, c]:
                # mirror the source across the wall-cell plane
                img = (2 * r - src[0], src[1]) if dr else (src[0], 2 * c - src[1])
                images.append((img, 1.0 - float(scene.absorption[r, c])))
                break
    return images


def compute_rir(scene: GridScene, source: tuple[int, int], pose: AgentPose,
                reverb: bool = True) -> BinauralRir:
    """Synthetic binaural RIR: direct path + first-order images + exponential tail."""
    if not (scene.is_free(source) and scene.is_free(pose.node)):
        raise InvalidInputError("source and agent must be on free cells")
    left: list[tuple[int, float]] = []
    right: list[tuple[int, float]] = []

    # All tap delays are relative to the direct arrival: the direct path sits
    # at delay 0 (plus ITD) and longer paths are offset by their extra
    # time-of-flight, so the received target stays aligned with its source.
    r_direct = euclidean_distance(source, pose.node)

    def add_path(loc, reflect_gain):
        r = euclidean_distance(loc, pose.node)
        gain = reflect_gain / max(r, 1.0)
        gain *= OCCLUSION_FACTOR ** _occluding_walls(scene, loc, pose.node)
        sin_az = _azimuth_sin(loc, pose)
        l, rr = _ear_taps(gain, max(r - r_direct, 0.0) / SPEED_OF_SOUND, sin_az)
        left.append(l)
        right.append(rr)
        return gain

    direct_gain = add_path(source, 1.0)
    for img, refl in _wall_images(scene, source):
        add_path(img, REFLECTION_SCALE * refl)

    if reverb:
        # deterministic sparse exponential tail keyed on scene and endpoints
        mean_abs = float(scene.absorption[scene.occupancy].mean()) if scene.occupancy.any() else 0.5
        tau = TAIL_MS / 1000.0 * (1.5 - mean_abs)
        rng = np.random.default_rng(
            abs(hash((scene.seed, source, pose.node, pose.heading))) % (2**32)
        )
        for _ in range(12):
            dt = rng.uniform(0.005, 3.5 * tau)
            g = TAIL_SCALE * direct_gain * np.exp(-dt / tau)
            d = int(round(dt * SAMPLE_RATE))
            left.append((d, g * rng.uniform(0.7, 1.0)))
            right.append((d, g * rng.uniform(0.7, 1.0)))
    return BinauralRir(left=left, right=right)


def spatialize(segment: np.ndarray, rir: BinauralRir) -> np.ndarray:
    """Convolve a 1 s mono segment with the RIR; returns (16000, 2)."""
    segment = np.asarray(segment, dtype=np.float32)
    if segment.ndim != 1 or segment.shape[0] != SAMPLE_RATE:
        raise InvalidInputError("segment must be 1 s monaural")
    out = np.zeros((SAMPLE_RATE, 2), dtype=np.float32)
    for ch, taps in enumerate((rir.left, rir.right)):
        for delay, gain in taps:
            if delay >= SAMPLE_RATE:
                continue
            n = SAMPLE_RATE - delay
            out[delay:, ch] += gain * segment[:n]
    return out


def mix(segments: list[np.ndarray]) -> np.ndarray:
    """Elementwise mean of equal-length binaural segments."""
    if not segments:
        raise InvalidInputError("cannot mix an empty list")
    return np.mean(np.stack(segments), axis=0).astype(np.float32)


def save_scene(scene: GridScene, path) -> None:
    """ASCII map (# wall, . free) plus JSON sidecar with absorption."""
    path = Path(path)
    rows = ["".join("#" if cell else "." for cell in row) for row in scene.occupancy]
    path.write_text("\n".join(rows) + "\n")
    sidecar = {"seed": scene.seed, "absorption": scene.absorption.tolist()}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))


def load_scene(path) -> GridScene:
    path = Path(path)
    rows = path.read_text().strip("\n").split("\n")
    occ = np.array([[ch == "#" for ch in row] for row in rows])
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return GridScene(occupancy=occ, absorption=np.array(sidecar["absorption"]),
                     seed=int(sidecar["seed"]))
