"""Constant-velocity Kalman tracking of foreground centroids."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

# state is (x, y, vx, vy); one frame per step
F = np.array([[1.0, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]])
H = np.array([[1.0, 0, 0, 0], [0, 1, 0, 0]])


@dataclass
class TrackerParams:
    process_noise: tuple = (0.25, 0.25, 1.0, 1.0)
    measurement_noise: tuple = (4.0, 4.0)
    initial_cov: tuple = (25.0, 25.0, 100.0, 100.0)
    gate: float = 40.0
    miss_limit: int = 5

    @property
    def Q(self):
        return np.diag(self.process_noise)

    @property
    def R(self):
        return np.diag(self.measurement_noise)


@dataclass
class Track:
    id: int
    state: np.ndarray
    cov: np.ndarray
    age: int = 0
    frames_since_seen: int = 0
    detection: object = None

    @property
    def position(self):
        return (float(self.state[0]), float(self.state[1]))


def kalman_predict(track: Track, Q) -> Track:
    state = F @ track.state
    cov = F @ track.cov @ F.T + Q
    cov = 0.5 * (cov + cov.T)
    return replace(track, state=state, cov=cov, age=track.age + 1,
                   frames_since_seen=track.frames_since_seen + 1, detection=None)


def kalman_update(track: Track, measurement, R, detection=None) -> Track:
    z = np.asarray(measurement, dtype=np.float64)
    innov = z - H @ track.state
    S = H @ track.cov @ H.T + R
    K = np.linalg.solve(S.T, (track.cov @ H.T).T).T
    state = track.state + K @ innov
    # Joseph form keeps the covariance symmetric PSD
    I_KH = np.eye(4) - K @ H
    cov = I_KH @ track.cov @ I_KH.T + K @ R @ K.T
    cov = 0.5 * (cov + cov.T)
    return replace(track, state=state, cov=cov, frames_since_seen=0, detection=detection)


def associate(positions, centroids, gate):
    """Greedy nearest-neighbour matching.

    Returns ``(pairs, unmatched_tracks, unmatched_detections)`` where pairs are
    ``(track_index, detection_index)``; pairs are taken in order of increasing
    distance and only within ``gate``.
    """
    cand = []
    for i, p in enumerate(positions):
        for j, c in enumerate(centroids):
            d = float(np.hypot(p[0] - c[0], p[1] - c[1]))
            if d <= gate:
                cand.append((d, i, j))
    cand.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, i, j in cand:
        if i in used_t or j in used_d:
            continue
        pairs.append((i, j))
        used_t.add(i)
        used_d.add(j)
    return (pairs, [i for i in range(len(positions)) if i not in used_t],
            [j for j in range(len(centroids)) if j not in used_d])


@dataclass
class Tracker:
    params: TrackerParams = field(default_factory=TrackerParams)
    tracks: list = field(default_factory=list)
    _ids: itertools.count = field(default_factory=itertools.count, repr=False)
    spawned: int = 0

    def spawn(self, detection) -> Track:
        p = self.params
        state = np.array([detection.centroid[0], detection.centroid[1], 0.0, 0.0])
        t = Track(next(self._ids), state, np.diag(p.initial_cov).astype(float),
                  detection=detection)
        self.spawned += 1
        return t

    def step(self, detections):
        """Predict, associate, update, spawn and retire; returns tracks seen this frame."""
        p = self.params
        predicted = [kalman_predict(t, p.Q) for t in self.tracks]
        pairs, lost, fresh = associate([t.position for t in predicted],
                                       [d.centroid for d in detections], p.gate)
        tracks = list(predicted)
        for i, j in pairs:
            tracks[i] = kalman_update(predicted[i], detections[j].centroid, p.R,
                                      detection=detections[j])
        for j in fresh:
            tracks.append(self.spawn(detections[j]))
        self.tracks = [t for t in tracks if t.frames_since_seen <= p.miss_limit]
        return [t for t in self.tracks if t.detection is not None]
