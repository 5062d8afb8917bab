package pp.battleship.model;

import java.util.Objects;

/**
 * An immutable point with integer coordinates.
 */
public final class IntPoint {
    private final int x;
    private final int y;

    public IntPoint(int x, int y) {
        this.x = x;
        this.y = y;
    }

    public int getX() { return x; }

    public int getY() { return y; }

    @Override
    public boolean equals(Object o) {
        if (this == o) return true;
        if (!(o instanceof IntPoint other)) return false;
        return x == other.x && y == other.y;
    }

    @Override
    public int hashCode() {
        return Objects.hash(x, y);
    }

    @Override
    public String toString() {
        return "IntPoint[x=" + x + ", y=" + y + "]";
    }
}
