import numpy as np
import pytest

from dewet3d.mesh import build_mesh

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    detail = dict(report.user_properties).get("detail", "")
    _acceptance.append((crit, report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(_acceptance, key=lambda r: r[0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {crit}: {detail}")


@pytest.fixture
def report(record_property):
    """Attach a criterion id and a human-readable measurement to the test report."""

    def _report(criterion, detail):
        record_property("criterion", criterion)
        record_property("detail", detail)

    return _report


def unit_square_patch():
    """[0,1]^2 at z=0 split along the diagonal, counter-clockwise seen from above."""
    V = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    T = np.array([[0, 1, 2], [0, 2, 3]])
    return build_mesh(V, T)


def random_cap(rng, n_ring=8, n_rad=3, jitter=0.05):
    """Randomly perturbed spherical-cap-like mesh with one contact loop."""
    verts = [[0.0, 0.0, 1.0]]
    for r in range(1, n_rad + 1):
        rho = r / n_rad
        for k in range(n_ring):
            phi = 2 * np.pi * (k + 0.5 * (r % 2)) / n_ring
            z = 0.0 if r == n_rad else (1 - rho**2)
            p = [rho * np.cos(phi), rho * np.sin(phi), z]
            if r < n_rad:
                p = list(np.array(p) + jitter * rng.uniform(-1, 1, 3))
            verts.append(p)
    tris = []
    for k in range(n_ring):
        tris.append([0, 1 + k, 1 + (k + 1) % n_ring])
    for r in range(1, n_rad):
        a0, b0 = 1 + (r - 1) * n_ring, 1 + r * n_ring
        for k in range(n_ring):
            k1 = (k + 1) % n_ring
            if r % 2:
                tris.append([a0 + k, b0 + k, b0 + k1])
                tris.append([a0 + k, b0 + k1, a0 + k1])
            else:
                tris.append([a0 + k, b0 + k, a0 + k1])
                tris.append([a0 + k1, b0 + k, b0 + k1])
    return build_mesh(np.array(verts), np.array(tris))
