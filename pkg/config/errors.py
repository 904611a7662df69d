# config/errors.py
# -----------------------------------------------------------------------------
# Hierarquia de exceções do projeto.
#
# Todas herdam de PvrnnError para que o launcher consiga separar "erro do
# usuário" (código de saída 1) de falha interna (código 2). As subclasses
# também herdam da exceção builtin mais próxima, então quem já captura
# ValueError continua funcionando.
# -----------------------------------------------------------------------------

from __future__ import annotations

from typing import Iterable, Optional


class PvrnnError(Exception):
    """Base de todos os erros previstos pelo projeto."""


class ConfigError(PvrnnError, ValueError):
    """Configuração ou topologia inválida.

    Guarda a lista de chaves problemáticas para que a CLI mostre todas de uma vez.
    """

    def __init__(self, message: str, keys: Optional[Iterable[str]] = None) -> None:
        self.keys = list(keys or [])
        if self.keys:
            message = f"{message} (chaves: {', '.join(self.keys)})"
        super().__init__(message)


class DataValidationError(PvrnnError, ValueError):
    """Dados de entrada fora do contrato (faixa, formato, dimensões)."""


class NumericError(PvrnnError, ArithmeticError):
    """Valor não finito detectado durante o cálculo."""

    def __init__(self, message: str, step: Optional[int] = None) -> None:
        self.step = step
        if step is not None:
            message = f"{message} (passo t={step})"
        super().__init__(message)


class ContractError(PvrnnError, RuntimeError):
    """Pré-condição de chamada violada (ex.: ε ausente para o intervalo pedido)."""


class IntegrityError(PvrnnError, IOError):
    """Arquivo corrompido, truncado ou com hash divergente."""


class IncompatibleCheckpointError(IntegrityError):
    """Checkpoint válido, mas com topologia diferente da esperada."""


class GradientCheckError(PvrnnError, AssertionError):
    """Gradientes analíticos divergiram das diferenças finitas."""

    def __init__(self, message: str, groups: Iterable[str]) -> None:
        self.groups = list(groups)
        super().__init__(f"{message}: {', '.join(self.groups)}")
