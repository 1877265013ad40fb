"""
Geradores aleatórios reproduzíveis.

Todo fluxo aleatório é um PCG64 (numpy) semeado por um SeedSequence cuja
entropia é a tupla (seed mestre, STREAM_*, id). Cada DAG, ator ou inicialização
de rede recebe o próprio fluxo, então geração paralela e serial produzem
exatamente os mesmos números em qualquer plataforma.
"""
import numpy as np

STREAM_TOPOLOGY = 1
STREAM_WEIGHTS = 2
STREAM_SPLIT = 3
STREAM_SCENARIO = 4
STREAM_INIT = 5
STREAM_ACTOR = 6
STREAM_QUEUE = 7
STREAM_BASELINE = 8
STREAM_EVAL = 9


def make_rng(*keys: int) -> np.random.Generator:
    """Cria um Generator PCG64 a partir de chaves inteiras não negativas"""
    if not keys:
        raise ValueError("make_rng precisa de pelo menos uma chave")
    entropy = [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise ValueError(f"Chaves de RNG devem ser não negativas: {entropy}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
