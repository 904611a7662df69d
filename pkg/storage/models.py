# storage/models.py
from sqlalchemy import Column, Float, ForeignKey, Integer, JSON, LargeBinary, String
from sqlalchemy.orm import relationship

from storage.db import Base


class TrialORM(Base):
    __tablename__ = "trial"
    id = Column(Integer, primary_key=True, index=True)
    network = Column(String(64), index=True, nullable=False)
    sequence_id = Column(Integer, index=True, nullable=False)
    task = Column(String(16), nullable=False)
    condition = Column(Integer, nullable=False)
    trial = Column(Integer, nullable=False)
    seed = Column(JSON, nullable=False)
    steps = Column(Integer, nullable=False)
    resolutions = Column(JSON, nullable=False)
    shapes = Column(JSON, nullable=False)       # nome -> forma, na ordem do blob
    arrays = Column(LargeBinary, nullable=False)  # float64 little-endian concatenados

    measures = relationship("TrialStepORM", back_populates="trial_row", cascade="all, delete-orphan")


class TrialStepORM(Base):
    __tablename__ = "trial_step"
    id = Column(Integer, primary_key=True, index=True)
    trial_id = Column(Integer, ForeignKey("trial.id"), index=True, nullable=False)
    step = Column(Integer, nullable=False)
    measure = Column(String(64), nullable=False)  # "error.<nome>", "term.<nome>" ou "window"
    value = Column(Float, nullable=False)

    trial_row = relationship("TrialORM", back_populates="measures")
