"""Fold ResNet-18 normalization layers into convolutions and export VSTW."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torchvision.models import resnet18

from vista_export.vstw import write_manifest, write_weights

# conv tensors of the feature graph, with their paired norm layer
_GRAPH: list[tuple[str, str]] = [("conv1", "bn1")]
for _stage, _blocks in ((1, 2), (2, 2), (3, 2), (4, 2)):
    for _b in range(_blocks):
        _p = f"layer{_stage}.{_b}"
        _GRAPH.append((f"{_p}.conv1", f"{_p}.bn1"))
        _GRAPH.append((f"{_p}.conv2", f"{_p}.bn2"))
        if _b == 0 and _stage > 1:
            _GRAPH.append((f"{_p}.downsample.0", f"{_p}.downsample.1"))

# classifier head and bookkeeping entries that are knowingly dropped
_IGNORED_SUFFIXES = ("num_batches_tracked",)
_IGNORED_PREFIXES = ("fc.",)


class ExportError(ValueError):
    """Raised when the source checkpoint does not match the expected graph."""


@dataclass(frozen=True)
class ExportSpec:
    """What to export and where.

    ``source`` accepts "torchvision:resnet18" (pretrained snapshot, needs
    model-zoo access), "random:<seed>" (deterministically initialized graph
    with randomized norm statistics, for offline runs), or a path to a saved
    state dict.
    """

    source: str
    output: str
    fold_norm: bool = True


def load_source_model(source: str) -> torch.nn.Module:
    if source == "torchvision:resnet18":
        from torchvision.models import ResNet18_Weights

        model = resnet18(weights=ResNet18_Weights.IMAGENET1K_V1)
    elif source.startswith("random:"):
        try:
            seed = int(source.split(":", 1)[1])
        except ValueError as exc:
            raise ExportError(f"bad source {source!r}: seed must be an integer") from exc
        torch.manual_seed(seed)
        model = resnet18(weights=None)
        _randomize_norm_stats(model, seed)
    else:
        path = Path(source)
        if not path.exists():
            raise ExportError(f"source checkpoint not found: {path}")
        model = resnet18(weights=None)
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    return model.eval()


def _randomize_norm_stats(model: torch.nn.Module, seed: int) -> None:
    """Give fresh norm layers non-trivial statistics so folding is exercised."""
    gen = torch.Generator().manual_seed(seed ^ 0x5EED)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, torch.nn.BatchNorm2d):
                module.running_mean.copy_(torch.randn(module.num_features, generator=gen) * 0.5)
                module.running_var.copy_(torch.rand(module.num_features, generator=gen) * 1.5 + 0.5)
                module.weight.copy_(torch.rand(module.num_features, generator=gen) + 0.5)
                module.bias.copy_(torch.randn(module.num_features, generator=gen) * 0.3)


def fold_conv_norm(
    weight: torch.Tensor,
    gamma: torch.Tensor,
    beta: torch.Tensor,
    mean: torch.Tensor,
    var: torch.Tensor,
    eps: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Equivalent affine-adjusted convolution for conv -> norm in eval mode."""
    scale = gamma / torch.sqrt(var + eps)
    folded_w = weight * scale[:, None, None, None]
    folded_b = beta - mean * scale
    return folded_w.numpy().astype(np.float32), folded_b.numpy().astype(np.float32)


def _check_state_coverage(state: dict, used: set) -> None:
    leftovers = []
    for key in state:
        if key in used:
            continue
        if key.endswith(_IGNORED_SUFFIXES) or key.startswith(_IGNORED_PREFIXES):
            continue
        leftovers.append(key)
    if leftovers:
        raise ExportError(f"unmapped tensors in source graph: {sorted(leftovers)}")


def collect_tensors(model: torch.nn.Module, fold_norm: bool = True) -> dict[str, np.ndarray]:
    """Graph-ordered tensor dict; folded (conv weight+bias) or raw (+norm)."""
    state = {k: v.detach().cpu() for k, v in model.state_dict().items()}
    used: set[str] = set()
    out: dict[str, np.ndarray] = {}
    for conv, norm in _GRAPH:
        exported = conv.replace(".downsample.0", ".downsample")
        try:
            weight = state[f"{conv}.weight"]
            gamma = state[f"{norm}.weight"]
            beta = state[f"{norm}.bias"]
            mean = state[f"{norm}.running_mean"]
            var = state[f"{norm}.running_var"]
        except KeyError as exc:
            raise ExportError(f"source graph is missing tensor {exc.args[0]}") from exc
        used.update(
            {f"{conv}.weight", f"{norm}.weight", f"{norm}.bias",
             f"{norm}.running_mean", f"{norm}.running_var"}
        )
        if fold_norm:
            folded_w, folded_b = fold_conv_norm(weight, gamma, beta, mean, var, eps=1e-5)
            out[f"{exported}.weight"] = folded_w
            out[f"{exported}.bias"] = folded_b
        else:
            norm_name = norm if not norm.endswith(".1") else norm.removesuffix(".1") + ".norm"
            out[f"{exported}.weight"] = weight.numpy().astype(np.float32)
            out[f"{norm_name}.weight"] = gamma.numpy().astype(np.float32)
            out[f"{norm_name}.bias"] = beta.numpy().astype(np.float32)
            out[f"{norm_name}.running_mean"] = mean.numpy().astype(np.float32)
            out[f"{norm_name}.running_var"] = var.numpy().astype(np.float32)
    _check_state_coverage(state, used)
    return out


def export_weights(spec: ExportSpec) -> str:
    """Write the VSTW file plus manifest; returns the content checksum."""
    model = load_source_model(spec.source)
    tensors = collect_tensors(model, fold_norm=spec.fold_norm)
    write_weights(spec.output, tensors)
    return write_manifest(spec.output, tensors)


def folded_reference_model(source_model: torch.nn.Module) -> torch.nn.Module:
    """Torch twin of the consumer graph: folded convs, norm layers dropped.

    Used to verify folding equivalence against the eval-mode source model.
    """
    import copy

    model = copy.deepcopy(source_model).eval()
    with torch.no_grad():
        for conv_name, norm_name in _GRAPH:
            conv = model.get_submodule(conv_name)
            norm = model.get_submodule(norm_name)
            folded_w, folded_b = fold_conv_norm(
                conv.weight.detach(),
                norm.weight.detach(),
                norm.bias.detach(),
                norm.running_mean.detach(),
                norm.running_var.detach(),
                eps=norm.eps,
            )
            conv.weight.copy_(torch.from_numpy(folded_w))
            conv.bias = torch.nn.Parameter(torch.from_numpy(folded_b))
            parent_name, _, child = norm_name.rpartition(".")
            parent = model.get_submodule(parent_name) if parent_name else model
            setattr(parent, child, torch.nn.Identity())
    return model


def feature_maps(model: torch.nn.Module, x: torch.Tensor) -> dict[int, torch.Tensor]:
    """Stage 2-4 outputs of a torchvision-style ResNet in eval mode."""
    with torch.no_grad():
        v = model.maxpool(model.relu(model.bn1(model.conv1(x))))
        maps = {}
        for stage in (1, 2, 3, 4):
            v = getattr(model, f"layer{stage}")(v)
            if stage >= 2:
                maps[stage] = v
    return maps
