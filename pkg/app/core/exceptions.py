"""
Hierarquia de erros do domínio.

Violações de restrição (CS1–CS4) não são erros: são retornadas como dados
(ver app.core.cost_model.Violation).
"""


class FogAppoError(Exception):
    """Erro base do projeto"""


# DAG
class InvalidDag(FogAppoError):
    """DAG de serviço inválido"""


class CycleDetected(InvalidDag):
    """O grafo contém um ciclo"""


class DanglingEdge(InvalidDag):
    """Aresta referencia uma tarefa inexistente"""


class EmptyDag(InvalidDag):
    """DAG sem tarefas"""


class DuplicateTaskId(InvalidDag):
    """Duas tarefas com o mesmo id"""


# Modelo de custo / ambiente
class UnassignedPredecessor(FogAppoError):
    """Um predecessor da tarefa ainda não foi alocado"""


class IncompleteAssignment(FogAppoError):
    """A configuração de offloading não cobre todas as tarefas"""


class EpisodeFinished(FogAppoError):
    """step() chamado depois do fim do episódio"""


class InvalidAction(FogAppoError):
    """Id de servidor fora do intervalo [0, M)"""


# Redes / otimização
class ShapeMismatch(FogAppoError):
    """Dimensões incompatíveis entre parâmetros e entrada"""


class NonFiniteGradient(FogAppoError):
    """Gradiente com NaN ou infinito"""


class NonFiniteRatio(FogAppoError):
    """Razão de importance sampling não finita (underflow da política de comportamento)"""


# Oracle / harness
class BudgetExceeded(FogAppoError):
    """Espaço de busca M^L acima do orçamento configurado"""


class NonPositiveTime(FogAppoError):
    """Tempo de referência ou candidato não positivo"""


# Runtime
class ChannelClosed(FogAppoError):
    """Canal entre atores e learner foi fechado"""


class WorkerFailed(FogAppoError):
    """Um ator ou o learner falhou durante o treinamento"""


class DatasetWriteError(FogAppoError):
    """Falha de escrita do dataset em disco"""
