"""Smoke test for the gnss_pvt extension module."""

import math

import gnss_pvt


def main() -> None:
    x, y, z = gnss_pvt.geodetic_to_ecef(1.3483, 103.6831, 20.0)
    lat, lon, alt = gnss_pvt.ecef_to_geodetic(x, y, z)
    assert abs(lat - 1.3483) < 1e-9 and abs(lon - 103.6831) < 1e-9 and abs(alt - 20.0) < 1e-4

    d = gnss_pvt.vincenty_distance(0.0, 0.0, 0.0, 1.0)
    assert abs(d - 111319.49079327357) < 1e-3, d

    assert gnss_pvt.horizontal_score([float(v) for v in range(1, 101)]) == (50.5 + 95.05) / 2
    assert gnss_pvt.ecdf([3.0, 1.0, 2.0])[-1] == (3.0, 1.0)

    noise_free = "seed = 5\nduration_s = 10\nsigma_rho = 0.0\nsigma_rho_dot = 0.0\n"
    sc = gnss_pvt.Scenario(noise_free)
    assert sc.epochs == 10
    state, iterations = sc.wls(0)
    truth = sc.truth()[0]
    err = math.dist((state[0], state[2], state[4]), (truth[0], truth[2], truth[4]))
    assert err < 1e-3, err
    print(f"wls epoch 0: {err:.2e} m after {iterations} iterations")

    sc = gnss_pvt.Scenario("seed = 7\nduration_s = 60\n")
    for method in ("wls", "mhe", "ekf", "rts"):
        sols = sc.solve(method)
        assert len(sols) == sc.epochs
        assert all(s.state is not None for s in sols[2:]), method
        print(f"{method}: score {sc.score(method):.3f} m")

    try:
        gnss_pvt.Scenario("duration_s = 0\n")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")

    log, derived, truth_csv = sc.files()
    assert log.startswith("#") and derived and truth_csv.startswith("utc_millis")
    print("smoke test passed")


if __name__ == "__main__":
    main()
