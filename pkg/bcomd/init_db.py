from bcomd.database import engine, make_engine
from bcomd.models import Base

def init_db(url: str = None):
    bind = make_engine(url) if url else engine
    Base.metadata.create_all(bind=bind)
    return bind

if __name__ == "__main__":
    print("Creating results ledger tables...")
    init_db()
    print("Results ledger tables created successfully!")
