"""
⚠️ UWB Swarm Tracker - Erros de domínio
"""


class SimulationError(RuntimeError):
    """Base de todos os erros levantados pela simulação"""


class CausalityError(SimulationError):
    """Evento agendado antes do instante atual (bug de lógica em algum nó)"""


class TransmitterBusy(SimulationError):
    """Nó tentou transmitir enquanto ainda estava no ar"""


class NoFreeSlot(SimulationError):
    """Todos os slots bloqueados e fila de mensagens vazia"""


class NegativeToF(SimulationError):
    """Troca TWR corrompida: t_round < t_reply"""


class DegenerateGeometry(SimulationError):
    """Âncoras colineares (2D) ou coplanares (3D)"""


class NonConvergence(SimulationError):
    """Gauss-Newton não convergiu no limite de iterações"""


class RangingTimeout(SimulationError):
    """Resposta TWR perdida (fora de alcance ou colisão)"""


class SingularInnovation(SimulationError):
    """Covariância de inovação S não inversível"""


class SingularGeometry(SimulationError):
    """Posição prevista coincide com a referência do range"""


class NoReference(SimulationError):
    """Nenhuma âncora ou vizinho visível para o ranging"""
