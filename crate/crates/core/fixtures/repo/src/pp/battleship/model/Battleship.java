package pp.battleship.model;

/**
 * A ship on the map, described by its length, position and rotation.
 */
public class Battleship implements Item {
    private final int length;
    private int x;
    private int y;
    private Rotation rot;
    private final Set<IntPoint> damaged = new HashSet<>();

    public Battleship(int length, int x, int y, Rotation rot) {
        this.length = length;
        this.x = x;
        this.y = y;
        this.rot = rot;
    }

    public int getLength() {
        return length;
    }

    public int getX() {
        return x;
    }

    public int getY() {
        return y;
    }

    public Rotation getRot() {
        return rot;
    }

    public void moveTo(int x, int y) {
        this.x = x;
        this.y = y;
    }

    public void moveTo(IntPoint pos) {
        moveTo(pos.getX(), pos.getY());
    }

    public boolean contains(int x, int y) {
        return switch (rot) {
            case LEFT, RIGHT -> y == this.y && Math.min(x2(), this.x) <= x && x <= Math.max(x2(), this.x);
            case UP, DOWN -> x == this.x && Math.min(y2(), this.y) <= y && y <= Math.max(y2(), this.y);
        };
    }

    private int x2() {
        return x + rot.dx() * (length - 1);
    }

    private int y2() {
        return y + rot.dy() * (length - 1);
    }

    public boolean isDestroyed() {
        return damaged.size() == length;
    }

    @Override
    public <T> T accept(Visitor<T> visitor) {
        return visitor.visit(this);
    }
}
