package pp.battleship.view;

import pp.battleship.model.Battleship;
import pp.battleship.model.ShipMap;

/**
 * Synchronizes the scene graph with the ships of the own map. Every ship is
 * represented by a box whose length equals the ship length.
 */
class SeaSynchronizer extends ShipMapSynchronizer {
    private static final float SHIP_HEIGHT = 0.4f;
    private final Node seaNode;

    SeaSynchronizer(BattleshipApp app, Node root, ShipMap map) {
        super(map, root);
        this.seaNode = root;
        addExisting();
    }

    @Override
    public Spatial visit(Battleship ship) {
        final Node node = new Node(ship.toString());
        node.attachChild(createShip(ship));
        final float x = 0.5f * (ship.getMinY() + ship.getMaxY() + 1f);
        final float z = 0.5f * (ship.getMinX() + ship.getMaxX() + 1f);
        node.setLocalTranslation(x, 0f, z);
        return node;
    }

    private Spatial createShip(Battleship ship) {
        return createBox(ship);
    }

    private Spatial createBox(Battleship ship) {
        final Box box = new Box(0.5f * (ship.getMaxY() - ship.getMinY()) + 0.3f,
                                SHIP_HEIGHT,
                                0.5f * (ship.getMaxX() - ship.getMinX()) + 0.3f);
        final Geometry geometry = new Geometry("ship", box);
        geometry.setMaterial(createColoredMaterial(ColorRGBA.Gray));
        return geometry;
    }

    private Material createColoredMaterial(ColorRGBA color) {
        final Material material = new Material(seaNode.getAssetManager(), "Common/MatDefs/Misc/Unshaded.j3md");
        material.setColor("Color", color);
        return material;
    }
}
