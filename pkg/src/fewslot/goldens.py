"""Published reference accuracies for SNIPS few-shot slot tagging.

These numbers are reported results from the original study of this benchmark,
shipped for side-by-side display in reports. They are NOT produced or
reproduced by this library. Values are percentages averaged over the three
slot-value collection sizes (50, 100, 200).

Keys: (domain, embedder, model, k_shot).
"""

from __future__ import annotations

DOMAINS = ("AddToPlaylist", "PlayMusic", "BookRestaurant", "GetWeather",
           "RateBook", "SearchCreativeWork", "FindScreeningEvent")
EMBEDDERS = ("fasttext", "elmo", "bert")
K_SHOTS = (5, 10, 15)

# per domain: {embedder: {model: (K=5, K=10, K=15)}}
_BASELINES = {
    "AddToPlaylist": {
        "fasttext": {"matching": (20.4, 20.5, 20.5),
                     "prototypical": (67.4, 67.6, 67.6),
                     "relation": (65.9, 70.4, 71.7)},
        "elmo": {"matching": (65.4, 71.7, 73.9),
                 "prototypical": (72.1, 71.8, 71.1),
                 "relation": (70.0, 75.1, 76.3)},
        "bert": {"matching": (65.9, 70.6, 73.2),
                 "prototypical": (70.8, 71.5, 71.4),
                 "relation": (69.9, 74.0, 74.3)},
    },
    "PlayMusic": {
        "fasttext": {"matching": (20.9, 20.8, 20.7),
                     "prototypical": (68.9, 68.6, 69.1),
                     "relation": (68.8, 72.2, 73.7)},
        "elmo": {"matching": (67.3, 73.7, 75.9),
                 "prototypical": (73.5, 72.2, 71.5),
                 "relation": (72.2, 76.5, 78.0)},
        "bert": {"matching": (64.8, 70.9, 73.3),
                 "prototypical": (67.4, 68.2, 67.7),
                 "relation": (67.7, 71.6, 73.0)},
    },
    "BookRestaurant": {
        "fasttext": {"matching": (23.5, 23.8, 24.0),
                     "prototypical": (75.0, 74.5, 74.3),
                     "relation": (78.7, 82.5, 83.6)},
        "elmo": {"matching": (71.3, 76.8, 78.9),
                 "prototypical": (81.2, 79.5, 77.5),
                 "relation": (82.9, 85.9, 86.5)},
        "bert": {"matching": (68.4, 72.7, 74.8),
                 "prototypical": (75.8, 76.5, 76.8),
                 "relation": (78.4, 81.8, 83.7)},
    },
    "GetWeather": {
        "fasttext": {"matching": (20.7, 25.7, 20.7),
                     "prototypical": (76.6, 75.9, 75.7),
                     "relation": (79.5, 84.2, 85.3)},
        "elmo": {"matching": (75.6, 82.2, 84.8),
                 "prototypical": (80.1, 78.5, 77.9),
                 "relation": (79.8, 85.1, 87.0)},
        "bert": {"matching": (75.3, 81.7, 84.3),
                 "prototypical": (78.5, 78.9, 79.1),
                 "relation": (83.6, 86.2, 85.8)},
    },
    "RateBook": {
        "fasttext": {"matching": (34.5, 35.1, 35.2),
                     "prototypical": (87.4, 88.3, 87.2),
                     "relation": (89.8, 92.2, 93.9)},
        "elmo": {"matching": (83.8, 89.3, 90.6),
                 "prototypical": (90.2, 90.2, 89.6),
                 "relation": (90.0, 93.9, 95.1)},
        "bert": {"matching": (88.0, 92.0, 93.7),
                 "prototypical": (92.8, 93.6, 93.2),
                 "relation": (92.0, 94.1, 93.9)},
    },
    "SearchCreativeWork": {
        "fasttext": {"matching": (37.8, 37.9, 38.2),
                     "prototypical": (78.1, 78.2, 78.2),
                     "relation": (82.8, 85.9, 86.3)},
        "elmo": {"matching": (82.8, 86.4, 88.6),
                 "prototypical": (85.8, 85.7, 83.8),
                 "relation": (89.7, 92.1, 92.9)},
        "bert": {"matching": (79.7, 84.4, 87.1),
                 "prototypical": (81.4, 82.0, 81.8),
                 "relation": (86.0, 90.3, 91.3)},
    },
    "FindScreeningEvent": {
        "fasttext": {"matching": (21.2, 21.3, 21.4),
                     "prototypical": (73.4, 73.5, 73.7),
                     "relation": (78.8, 83.1, 84.6)},
        "elmo": {"matching": (80.7, 87.7, 90.9),
                 "prototypical": (83.5, 81.6, 81.0),
                 "relation": (86.8, 89.9, 91.7)},
        "bert": {"matching": (78.6, 86.4, 89.5),
                 "prototypical": (78.0, 78.1, 78.3),
                 "relation": (81.3, 86.8, 87.9)},
    },
}

# per domain: {embedder: (K=5, K=10, K=15)} for the attentive relational model
_ATTENTIVE = {
    "AddToPlaylist": {"fasttext": (63.6, 66.1, 68.3),
                      "elmo": (71.9, 75.8, 77.7),
                      "bert": (72.6, 76.6, 78.5)},
    "PlayMusic": {"fasttext": (68.5, 71.8, 73.2),
                  "elmo": (74.7, 77.7, 79.2),
                  "bert": (72.8, 77.0, 78.7)},
    "BookRestaurant": {"fasttext": (78.9, 82.0, 83.1),
                       "elmo": (84.2, 87.2, 87.6),
                       "bert": (82.7, 86.0, 87.5)},
    "GetWeather": {"fasttext": (79.0, 82.7, 84.5),
                   "elmo": (83.3, 87.1, 88.5),
                   "bert": (84.9, 89.5, 90.2)},
    "RateBook": {"fasttext": (88.1, 90.9, 91.4),
                 "elmo": (92.3, 94.8, 95.6),
                 "bert": (94.8, 96.5, 96.7)},
    "SearchCreativeWork": {"fasttext": (81.7, 84.4, 85.1),
                           "elmo": (90.8, 93.0, 93.2),
                           "bert": (88.2, 91.5, 92.6)},
    "FindScreeningEvent": {"fasttext": (76.9, 81.2, 82.1),
                           "elmo": (87.3, 90.8, 92.3),
                           "bert": (82.9, 87.0, 88.3)},
}


def reference_accuracy(domain: str, embedder: str, model: str, k_shot: int) -> float:
    """Reported reference accuracy (percent) for one benchmark cell."""
    column = K_SHOTS.index(k_shot)
    if model == "attentive":
        return _ATTENTIVE[domain][embedder][column]
    return _BASELINES[domain][embedder][model][column]


def reference_table() -> dict[tuple[str, str, str, int], float]:
    """All reference cells keyed like GridResult report rows."""
    out = {}
    for domain in DOMAINS:
        for embedder in EMBEDDERS:
            for k in K_SHOTS:
                for model in ("matching", "prototypical", "relation", "attentive"):
                    out[(domain, embedder, model, k)] = reference_accuracy(
                        domain, embedder, model, k)
    return out
