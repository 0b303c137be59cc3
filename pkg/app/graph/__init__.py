"""Episode workflow: LangGraph state machine shared by training and evaluation."""
