from sqlalchemy import create_engine
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import sessionmaker

from bcomd.config import settings

Base = declarative_base()


def make_engine(url: str = None):
    url = url or settings.DATABASE_URL
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def make_session_factory(url: str = None):
    return sessionmaker(autocommit=False, autoflush=False, bind=make_engine(url))


engine = make_engine()
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

# One session per unit of work; closed when the generator is closed
def get_db(session_factory=None):
    db = (session_factory or SessionLocal)()
    try:
        yield db
    finally:
        db.close()
