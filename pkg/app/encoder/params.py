"""
Flat views of module parameters, used by the finite-difference audits
"""
from torch.func import functional_call
from torch.nn.utils import parameters_to_vector


def parameter_vector(module):
    """All parameters concatenated in ``named_parameters`` order"""
    return parameters_to_vector(module.parameters()).detach().clone()


def unflatten(module, flat):
    """Name -> tensor views of ``flat`` shaped like the module parameters"""
    params, offset = {}, 0
    for name, p in module.named_parameters():
        n = p.numel()
        params[name] = flat[offset:offset + n].view_as(p)
        offset += n
    if offset != flat.numel():
        raise ValueError(
            f"Vector has {flat.numel()} entries, module needs {offset}"
        )
    return params


def call_with_vector(module, flat, *args, **kwargs):
    """Run ``module(*args)`` with its parameters replaced by ``flat``"""
    return functional_call(module, unflatten(module, flat), args, kwargs)
