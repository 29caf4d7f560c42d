from sqlparse.engine.filter_stack import FilterStack

__all__ = ['FilterStack']
