from sqlalchemy import Column, Integer, String, DateTime, Float, ForeignKey, Text, JSON
from sqlalchemy.orm import relationship
from datetime import datetime
from bcomd.database import Base

class Sweep(Base):
    __tablename__ = "sweeps"
    id = Column(Integer, primary_key=True, index=True)
    name = Column(String, index=True, nullable=False)
    violation_threshold = Column(Float, nullable=True)
    best_config = Column(String, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    runs = relationship("ExperimentRun", back_populates="sweep", cascade="all, delete-orphan")

class ExperimentRun(Base):
    __tablename__ = "experiment_runs"
    id = Column(Integer, primary_key=True, index=True)
    sweep_id = Column(Integer, ForeignKey("sweeps.id"), nullable=True)
    name = Column(String, index=True, nullable=False)
    policy = Column(String, index=True, nullable=False)
    seed = Column(Integer, nullable=False)
    horizon = Column(Integer, nullable=False)
    final_regret = Column(Float, nullable=True)
    final_expected_regret = Column(Float, nullable=True)
    final_violation = Column(Float, nullable=True)
    max_lambda = Column(Float, nullable=True)
    path_length = Column(Float, nullable=True)
    temporal_variation = Column(Float, nullable=True)
    rho_hat = Column(Float, nullable=True)
    wall_clock = Column(Float, nullable=True)
    csv_path = Column(String, nullable=True)
    status = Column(String, default="ok")
    error = Column(Text, nullable=True)
    extra = Column(JSON, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    sweep = relationship("Sweep", back_populates="runs")
