"""Shared test utilities: independent oracles and synthetic graph builders.

The oracles here deliberately avoid the package's tensor core: the encoder
oracle is plain-Python scalar arithmetic, the ranking oracle sorts candidate
lists instead of counting comparisons, and gradients come from central finite
differences.
"""
from __future__ import annotations

import math

import numpy as np

from kglink.autodiff import Tensor
from kglink.data import TripleStore


# finite differences ----------------------------------------------------------

def numeric_gradient(loss_fn, tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar loss w.r.t. one tensor."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = loss_fn()
        flat[i] = original - eps
        lower = loss_fn()
        flat[i] = original
        grad_flat[i] = (upper - lower) / (2 * eps)
    return grad


def assert_gradients_match(analytic: np.ndarray, numeric: np.ndarray,
                           rtol: float = 1e-4, atol: float = 1e-8,
                           label: str = "") -> None:
    analytic = np.zeros_like(numeric) if analytic is None else analytic
    diff = np.abs(analytic - numeric)
    tol = rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol
    bad = diff > tol
    assert not bad.any(), (
        f"gradient mismatch {label}: max diff {diff.max():.3e} "
        f"(analytic {analytic.reshape(-1)[bad.reshape(-1)][:3]}, "
        f"numeric {numeric.reshape(-1)[bad.reshape(-1)][:3]})"
    )


def check_gradients(build_loss, params: dict[str, Tensor], eps: float = 1e-5,
                    rtol: float = 1e-4, atol: float = 1e-8) -> None:
    """Compare tape gradients with finite differences for every parameter."""
    loss = build_loss()
    loss.backward()
    analytic = {name: (None if p.grad is None else p.grad.copy()) for name, p in params.items()}
    for name, p in params.items():
        numeric = numeric_gradient(lambda: build_loss().item(), p, eps=eps)
        assert_gradients_match(analytic[name], numeric, rtol=rtol, atol=atol, label=name)


# ranking oracle ---------------------------------------------------------------

def brute_force_rank(scores, target: int, filter_ids) -> float:
    """Tie-averaged rank by explicit sorting of the unfiltered candidate list."""
    filter_ids = set(filter_ids)
    items = [(float(s), i) for i, s in enumerate(scores) if i not in filter_ids]
    items.sort(key=lambda pair: -pair[0])
    target_score = float(scores[target])
    positions = [pos for pos, (s, _) in enumerate(items, start=1) if s == target_score]
    return sum(positions) / len(positions)


def brute_force_metrics(score_table: np.ndarray, queries, filters,
                        ks=(1, 3, 10)) -> dict:
    """MR / MRR / Hits@k via the sorting oracle over a dense score table."""
    ranks = []
    for row, (e, r, target) in enumerate(queries):
        known = filters.get((e, r), set()) - {target}
        ranks.append(brute_force_rank(score_table[row], target, known))
    ranks = np.asarray(ranks)
    return {
        "mr": float(ranks.mean()),
        "mrr": float((1.0 / ranks).mean()),
        "hits": {k: float((ranks <= k).mean()) for k in ks},
    }


# plain-Python encoder oracle ---------------------------------------------------

def _matvec(mat, vec):
    return [sum(row[j] * vec[j] for j in range(len(vec))) for row in mat]


def _softmax(values):
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def oracle_direction(direction, edges, entity_vecs, relation_vecs, w_msg,
                     w_query=None, att_vec=None):
    """Per-entity aggregation and per-edge coefficients, scalar arithmetic only.

    ``edges`` is the canonical (head, rel, tail) list.  Returns
    (aggregated list per entity, coefficient list aligned with edges).
    """
    n = len(entity_vecs)
    d = len(entity_vecs[0])
    by_center: dict[int, list[int]] = {}
    for e_idx, (h, r, t) in enumerate(edges):
        center = h if direction == "out" else t
        by_center.setdefault(center, []).append(e_idx)

    coeffs = [0.0] * len(edges)
    aggregated = [[0.0] * d for _ in range(n)]
    for center, edge_ids in by_center.items():
        messages, logits = [], []
        for e_idx in edge_ids:
            h, r, t = edges[e_idx]
            neighbor = t if direction == "out" else h
            message = _matvec(w_msg, list(entity_vecs[neighbor]) + list(relation_vecs[r]))
            messages.append(message)
            if att_vec is not None:
                feats = list(entity_vecs[h]) + list(relation_vecs[r]) + list(entity_vecs[t])
                logits.append(sum(a * f for a, f in zip(att_vec, feats)))
            else:
                query = _matvec(w_query, entity_vecs[center])
                logits.append(sum(q * m for q, m in zip(query, message)))
        alphas = _softmax(logits)
        for alpha, e_idx, message in zip(alphas, edge_ids, messages):
            coeffs[e_idx] = alpha
            for j in range(d):
                aggregated[center][j] += alpha * message[j]
    return aggregated, coeffs


def oracle_self_loop(entity_vecs, loop_vec, w_loop):
    return [_matvec(w_loop, list(vec) + list(loop_vec)) for vec in entity_vecs]


def oracle_layer(edges, entity_vecs, relation_vecs, loop_rel_id, weights,
                 attention="kbgsat", activation="tanh"):
    """One full layer in scalar arithmetic; returns (entities, relations)."""
    kwargs = {}
    if attention == "kbgsat":
        out_agg, _ = oracle_direction("out", edges, entity_vecs, relation_vecs,
                                      weights["out_msg"], w_query=weights["out_query"])
        in_agg, _ = oracle_direction("in", edges, entity_vecs, relation_vecs,
                                     weights["in_msg"], w_query=weights["in_query"])
    else:
        out_agg, _ = oracle_direction("out", edges, entity_vecs, relation_vecs,
                                      weights["out_msg"], att_vec=weights["att_vec"])
        in_agg, _ = oracle_direction("in", edges, entity_vecs, relation_vecs,
                                     weights["in_msg"], att_vec=weights["att_vec"])
    loop = oracle_self_loop(entity_vecs, relation_vecs[loop_rel_id], weights["loop"])
    act = math.tanh if activation == "tanh" else lambda v: max(v, 0.0)
    entities_out = []
    for i in range(len(entity_vecs)):
        combined = _matvec(weights["combine"], out_agg[i] + in_agg[i] + loop[i])
        entities_out.append([act(v) for v in combined])
    relations_out = [_matvec(weights["rel"], vec) for vec in relation_vecs]
    return entities_out, relations_out


def oracle_encode(edges, entity_vecs, relation_vecs, loop_rel_id, layer_weights,
                  attention="kbgsat", activation="tanh"):
    """Multi-layer forward with skip-summed entity outputs."""
    outputs = []
    ents, rels = entity_vecs, relation_vecs
    for weights in layer_weights:
        ents, rels = oracle_layer(edges, ents, rels, loop_rel_id, weights,
                                  attention=attention, activation=activation)
        outputs.append(ents)
    final = [
        [sum(layer[i][j] for layer in outputs) for j in range(len(outputs[0][0]))]
        for i in range(len(entity_vecs))
    ]
    return final, rels


def params_as_lists(params, layer: int) -> dict:
    """Pull one layer's weight matrices out of a params dict as nested lists."""
    prefix = f"layer{layer}."
    out = {}
    for name, tensor in params.items():
        if name.startswith(prefix):
            out[name[len(prefix):]] = tensor.data.tolist()
    return out


# synthetic graphs ----------------------------------------------------------------

def random_store(rng: np.random.Generator, n_entities: int = 10, n_relations: int = 3,
                 n_train: int = 25, n_valid: int = 4, n_test: int = 4) -> TripleStore:
    """Random triple store without duplicate triples inside a split."""
    ents = {f"e{i}": i for i in range(n_entities)}
    rels = {f"r{i}": i for i in range(n_relations)}

    def draw(count, taken):
        triples = []
        while len(triples) < count:
            h = int(rng.integers(n_entities))
            r = int(rng.integers(n_relations))
            t = int(rng.integers(n_entities))
            if (h, r, t) not in taken:
                taken.add((h, r, t))
                triples.append((h, r, t))
        return triples

    taken: set = set()
    return TripleStore(ents, rels, draw(n_train, taken), draw(n_valid, set()),
                       draw(n_test, set()))


def line_kg(n: int = 50, offsets=(1, 2, 3), seed: int = 7,
            valid_frac: float = 0.10, test_frac: float = 0.05) -> TripleStore:
    """Separable KG: relation k deterministically maps h to h + offsets[k].

    The holdout is degree-aware: no entity loses more than one incident fact,
    so every held-out query stays answerable from the remaining structure.
    """
    ents = {f"n{i:02d}": i for i in range(n)}
    rels = {f"plus{o}": k for k, o in enumerate(offsets)}
    facts = [(h, k, h + o) for k, o in enumerate(offsets) for h in range(n - o)]
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(facts)))
    n_valid = round(valid_frac * len(facts))
    n_test = round(test_frac * len(facts))
    degree = np.zeros(n, dtype=int)
    for h, _, t in facts:
        degree[h] += 1
        degree[t] += 1
    lost = np.zeros(n, dtype=int)
    valid, test, held = [], [], set()
    for idx in order:
        if len(valid) + len(test) >= n_valid + n_test:
            break
        h, _, t = facts[idx]
        if lost[h] or lost[t] or degree[h] <= 2 or degree[t] <= 2:
            continue
        lost[h] += 1
        lost[t] += 1
        held.add(idx)
        (valid if len(valid) < n_valid else test).append(facts[idx])
    train = [facts[i] for i in range(len(facts)) if i not in held]
    return TripleStore(ents, rels, train, valid, test)


def random_ranking_mrr(n_entities: int) -> float:
    """Expected reciprocal rank when the target lands uniformly at random."""
    return sum(1.0 / k for k in range(1, n_entities + 1)) / n_entities


def write_store_files(store: TripleStore, directory) -> None:
    from kglink.data import write_dataset

    write_dataset(store, directory)
