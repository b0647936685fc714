"""Smoke test for the signflip extension module: build with maturin, then run."""

import math

import signflip


def main():
    c = signflip.Contrast(1.0, -0.9999)
    assert c.class_name == "critical"
    mu = c.mu()
    assert abs(c.period() - math.pi / mu.real) < 1e-12
    assert abs(c.period() - 0.4983) < 1e-3
    d1, d2 = c.delta_n(1), c.delta_n(2)
    assert abs(d2 - d1 * d1) < 1e-14
    assert len(c.lattice(1.0)) >= 2

    try:
        signflip.Contrast(1.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("kappa = -1 accepted")

    mesh = signflip.Mesh.canonical(0.4, 12, 6)
    assert len(mesh) == len(mesh.triangles) == len(mesh.regions)
    system = signflip.assemble(mesh, c)
    neg, zero, pos = system.inertia()
    assert neg + zero + pos == system.dim

    rec = system.smallest_modulus(k=6, delta=0.4)
    dense = system.dense_smallest_modulus(k=6, delta=0.4)
    for a, b in zip(rec.eigenvalues, dense.eigenvalues):
        assert abs(a - b) <= 1e-8 * abs(b), (a, b)
    assert max(rec.residuals) <= 1e-9
    assert rec.n_neg + rec.n_pos == 6
    if neg:
        assert system.min_eigenvalue() <= min(rec.eigenvalues)

    records = signflip.sweep(c, [0.6, 0.4], k=4, n_radial=12, n_angular_minus=6)
    assert [r.delta for r in records] == [0.6, 0.4]
    assert records[1].eigenvalues == system.smallest_modulus(k=4, delta=0.4).eigenvalues

    norm = signflip.source_norm(mesh, c)
    assert norm > 0.0 and math.isfinite(norm)

    print("signflip", signflip.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
