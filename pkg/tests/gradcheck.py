"""Finite-difference gradient checks shared by the test modules."""

import torch

POINTS = range(5)


def central_fd(fn, inputs, wrt, eps=1e-6):
    """Float64 central differences of sum(fn(*inputs) * probe) w.r.t. inputs[wrt]."""
    x = inputs[wrt].detach().clone()
    out = fn(*inputs)
    probe = torch.randn(out.shape, generator=torch.Generator().manual_seed(99), dtype=torch.float64)
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        vals = []
        for sign in (1, -1):
            flat[i] = orig + sign * eps
            args = list(inputs)
            args[wrt] = x
            vals.append(float((fn(*args) * probe).sum().detach()))
        flat[i] = orig
        grad.view(-1)[i] = (vals[0] - vals[1]) / (2 * eps)
    return grad, probe


def autograd_grad(fn, inputs, wrt, probe, dtype):
    args = [t.detach().to(dtype) if t.is_floating_point() else t for t in inputs]
    args[wrt].requires_grad_(True)
    (fn(*args) * probe.to(dtype)).sum().backward()
    return args[wrt].grad.double()


def rel_err(a, b):
    return float((a - b).norm() / max(b.norm(), 1e-12))


def check_grad(fn, make_inputs, n_inputs):
    for point in POINTS:
        gen = torch.Generator().manual_seed(point)
        inputs = make_inputs(gen)
        for wrt in range(n_inputs):
            fd, probe = central_fd(fn, inputs, wrt)
            assert rel_err(autograd_grad(fn, inputs, wrt, probe, torch.float64), fd) < 1e-6
            assert rel_err(autograd_grad(fn, inputs, wrt, probe, torch.float32), fd) < 1e-4


def rand(gen, *shape):
    return torch.randn(*shape, generator=gen, dtype=torch.float64)
