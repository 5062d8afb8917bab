package pp.battleship.model;

import java.util.ArrayList;
import java.util.Collections;
import java.util.List;

/**
 * The map of one player, holding the ships placed on it.
 */
public class ShipMap {
    private final List<Battleship> ships = new ArrayList<>();
    private final int width;
    private final int height;

    public ShipMap(int width, int height) {
        this.width = width;
        this.height = height;
    }

    public void add(Battleship ship) {
        ships.add(ship);
        notifyListeners(new ItemAddedEvent(ship, this));
    }

    public void remove(Battleship ship) {
        ships.remove(ship);
    }

    public List<Battleship> getShips() {
        return Collections.unmodifiableList(ships);
    }

    public Battleship findShipAt(int x, int y) {
        for (Battleship ship : ships) {
            if (ship.contains(x, y))
                return ship;
        }
        return null;
    }

    public boolean isValid(int x, int y) {
        return 0 <= x && x < width && 0 <= y && y < height;
    }

    private void notifyListeners(GameEvent event) {
        // listeners are registered by the view {not shown here}
    }
}
