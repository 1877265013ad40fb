from fastapi import APIRouter, Depends, HTTPException, Request

from app.core.exceptions import BudgetExceeded, FogAppoError, InvalidDag
from app.schemas.dag import ServiceDag
from app.schemas.offload import OffloadResponse, OracleResult, PolicyInfo
from app.services.broker import PolicyBroker
from app.utils.log_helpers import log_error, log_info, log_warning

router = APIRouter(prefix="/api", tags=["offload"])


def get_broker(request: Request) -> PolicyBroker:
    """Broker da aplicação (criado a partir de settings no primeiro uso)"""
    broker = getattr(request.app.state, "broker", None)
    if broker is None:
        broker = PolicyBroker.from_settings()
        request.app.state.broker = broker
    return broker


@router.get("/policy", response_model=PolicyInfo)
def get_policy(broker: PolicyBroker = Depends(get_broker)):
    """
    Informações da política em uso.

    **Response:**
    - version: Versão da política (0 = política inicial, sem checkpoint)
    - checkpoint: Caminho do checkpoint carregado
    - num_servers: M do cenário do broker
    - state_size: Dimensão do estado
    """
    return broker.info()


@router.post("/offload", response_model=OffloadResponse)
def offload(dag: ServiceDag, broker: PolicyBroker = Depends(get_broker)):
    """
    Decide o servidor de cada tarefa do serviço com a política mais recente.

    **Request:** DAG no formato canônico {id, tasks, edges}

    **Response:**
    - assignment: tarefa -> servidor
    - exec_time_s: T(X), soma dos tempos das tarefas do caminho crítico
    - deadline_hit_rate: fração de tarefas dentro do prazo
    - outcomes: resultado por tarefa, na ordem de execução
    - violations: violações de restrição (RAM, prazo)
    - decision_time_ms: tempo de decisão
    """
    try:
        result = broker.offload(dag)
    except InvalidDag as e:
        log_warning("Serviço inválido", service_id=dag.id, error=str(e))
        raise HTTPException(status_code=400, detail=f"DAG inválido: {e}")
    except FogAppoError as e:
        log_error("Erro ao decidir offloading", exc=e, service_id=dag.id)
        raise HTTPException(status_code=500, detail=f"Erro ao decidir offloading: {e}")

    log_info("Offloading decidido", service_id=dag.id, policy_version=result.policy_version,
             exec_time_s=result.exec_time_s, decision_time_ms=result.decision_time_ms)
    return result


@router.post("/oracle", response_model=OracleResult)
def oracle(dag: ServiceDag, broker: PolicyBroker = Depends(get_broker)):
    """
    Alocação ótima por busca exaustiva (M^L limitado por ORACLE_BUDGET).

    **Response:**
    - assignment, objective_s, feasible, nodes_explored
    """
    try:
        return broker.oracle(dag)
    except InvalidDag as e:
        raise HTTPException(status_code=400, detail=f"DAG inválido: {e}")
    except BudgetExceeded as e:
        raise HTTPException(status_code=422, detail=str(e))
    except FogAppoError as e:
        log_error("Erro no oracle", exc=e, service_id=dag.id)
        raise HTTPException(status_code=500, detail=f"Erro no oracle: {e}")
