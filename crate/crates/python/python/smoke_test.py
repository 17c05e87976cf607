"""Exercise the Python bindings end to end; exits non-zero on failure."""

import math

import adaprecon as ap


def check_problems():
    saddle = ap.Problem.saddle()
    assert saddle.dim == 2 and saddle.name == "saddle"
    assert saddle.value([0.0, 0.0]) == 0.0
    g = saddle.sample_grad([0.1, 0.2], seed=3)
    assert g == saddle.sample_grad([0.1, 0.2], seed=3)
    assert len(saddle.second_moment([0.0, 0.0])) == 2

    q = ap.Problem.quadratic([[1.0, 0.0], [0.0, 0.5]], [[1.0, 0.0], [0.0, 1.0]])
    assert q.grad([2.0, 2.0]) == [2.0, 1.0]
    assert q.hessian([0.0, 0.0]) == [[1.0, 0.0], [0.0, 0.5]]

    logistic = ap.Problem.logistic(n=200, d=5, batch=20)
    assert logistic.second_moment([0.0] * 5) is None
    assert abs(logistic.value([0.0] * 5) - math.log(2.0)) < 1e-12

    try:
        q.value([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("dimension mismatch accepted")


def check_runs():
    saddle = ap.Problem.saddle()
    run = ap.run(saddle, [0.0, 0.0], 2000, algorithm="rmsprop", eta=1e-3, beta_c=1.0, seed=1)
    assert len(run) == 2001
    assert run.iter[0] == 0 and run.iter[-1] == 2000
    assert set(run.step_kind) == {"normal"}
    again = ap.run(saddle, [0.0, 0.0], 2000, algorithm="rmsprop", eta=1e-3, beta_c=1.0, seed=1)
    assert again.f == run.f

    burn = ap.run(saddle, [0.0, 0.0], 10, algorithm="rmsprop_burnin", burn_in=5)
    assert burn.step_kind[:5] == ["burnin"] * 5 and burn.iter[:5] == [-5, -4, -3, -2, -1]

    q = ap.Problem.quadratic([[1.0, 0.0], [0.0, 0.5]], [[1.0, 0.0], [0.0, 1.0]])
    tracked = ap.run(
        q, [1.0, 1.0], 50, algorithm="rmsprop", preconditioner="full", track_estimation_error=True
    )
    assert all(e is not None for e in tracked.est_error[1:])

    demo = dict(algorithm="rmsprop", preconditioner="full", exponent=-1.0, epsilon=0.0, beta=0.0)
    try:
        ap.run(q, [1.0, 1.0], 100, **demo)
    except ap.SingularMatrixError:
        pass
    else:
        raise AssertionError("singular estimate not reported")
    partial = ap.run(q, [1.0, 1.0], 100, strict=False, **demo)
    assert partial.error is not None and 0 < len(partial) < 101

    try:
        ap.run(q, [1.0, 1.0], 10, algorithm="adam")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown algorithm accepted")


def check_numerics():
    m = [[4.0, 0.0], [0.0, 9.0]]
    assert ap.sym_power(m, 0.5) == [[2.0, 0.0], [0.0, 3.0]]
    assert ap.op_norm(m) == 9.0
    assert ap.inv_perturbation_bound(1.0, 0.1) == 0.2
    assert abs(ap.beta_schedule(1e-3) - 0.99) < 1e-12
    assert ap.burn_in_length(1e-3) == 100
    eta, horizon = ap.first_order_params(l=1.0, c3=2.0, lambda_minus=0.5, f_gap=1.0, tau=0.5)
    assert eta > 0 and horizon > 0
    bound = ap.estimation_error_bound(
        sigma_max=1.0, m_step=1.0, l_g=1.0, eta=1e-3, beta=0.99, horizon=1000, dim=5
    )
    assert bound > 0
    dev = ap.isotropy_covariance_check(ap.Problem.saddle(), [0.3, -0.2], n_samples=20000, seed=2)
    assert dev < 5 * math.sqrt(2 / 20000)


if __name__ == "__main__":
    check_problems()
    check_runs()
    check_numerics()
    print("smoke test passed")
