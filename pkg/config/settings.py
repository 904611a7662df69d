# config/settings.py
import os

# Threads do torch e do pool de tentativas (o resultado não depende deste valor)
THREADS = int(os.getenv("PVRNN_THREADS", os.cpu_count() or 1))

LOG_LEVEL = os.getenv("PVRNN_LOG_LEVEL", "INFO")

# Diretório padrão dos runs quando --out não é informado
RUNS_DIR = os.getenv("PVRNN_RUNS_DIR", os.path.join(os.getcwd(), "runs"))

# Testes de aceitação em escala de bancada (minutos por semente)
SLOW_TESTS = os.getenv("PVRNN_SLOW", "0") == "1"
